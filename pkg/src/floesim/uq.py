"""Ensemble forecasts and statistics of kinematic quantities and contact forces."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, ParameterError
from .floes import FloeField, MaterialParams
from .integrator import Ensemble, InflationNoise, IntegratorSettings, SimulationState
from .superfloe import largest_indices

log = logging.getLogger(__name__)


def total_momenta(field: FloeField):
    """``(sum m v, sum I omega)`` with spin angular momentum only."""
    m = field.mass
    p = np.array([math.fsum(m * field.velocity[:, 0]), math.fsum(m * field.velocity[:, 1])])
    return p, float(math.fsum(field.inertia * field.omega))


def ensemble_momenta(ens: Ensemble):
    """Per-member totals: ``p (N, 2)`` and ``L (N,)``."""
    p = np.einsum("l,nlk->nk", ens.mass, ens.v)
    ang = ens.omega @ ens.inertia
    return p, ang


@dataclass
class MomentumSeries:
    times: np.ndarray     # (T,)
    p: np.ndarray         # (T, N, 2)
    L: np.ndarray         # (T, N)

    @property
    def n_members(self) -> int:
        return self.p.shape[1]

    def _std(self, a):
        if self.n_members < 2:
            raise InsufficientDataError("spread needs at least two members")
        return a.std(axis=1, ddof=1)

    @property
    def p_mean(self):
        return self.p.mean(axis=1)

    @property
    def p_std(self):
        return self._std(self.p)

    @property
    def L_mean(self):
        return self.L.mean(axis=1)

    @property
    def L_std(self):
        return self._std(self.L)

    def p_spread(self) -> np.ndarray:
        """Norm of the per-component standard deviations of ``p``."""
        s = self.p_std
        return np.hypot(s[:, 0], s[:, 1])

    def bands(self) -> dict:
        """Mean and +-1, +-2 standard-deviation bands for every quantity."""
        out = {}
        for name, mean, std in (("p1", self.p_mean[:, 0], self.p_std[:, 0]),
                                ("p2", self.p_mean[:, 1], self.p_std[:, 1]),
                                ("L", self.L_mean, self.L_std)):
            out[name] = {"mean": mean, "lo1": mean - std, "hi1": mean + std,
                         "lo2": mean - 2 * std, "hi2": mean + 2 * std, "std": std}
        return out


def ensemble_forecast(ic: SimulationState, n_members: int, t_final: float, seed,
                      mat: MaterialParams | None = None, settings: IntegratorSettings | None = None,
                      record_every: int = 1, inflation: InflationNoise | None = None,
                      threads: int = 1) -> MomentumSeries:
    """Run ``n_members`` members from the same initial condition.

    Members differ only in their noise streams (spawned from ``seed``).
    Integrator errors are re-raised naming the member.
    """
    if n_members < 2:
        raise ParameterError("an ensemble forecast needs at least two members")
    settings = settings or IntegratorSettings()
    mat = mat or MaterialParams()
    n_steps = int(round((t_final - ic.t) / settings.dt))
    ens = Ensemble(ic, n_members, mat, settings, inflation, seed=seed)
    times, ps, ls = [], [], []

    def rec(e, step):
        p, ang = ensemble_momenta(e)
        times.append(e.t)
        ps.append(p)
        ls.append(ang)

    ens.run(n_steps, record_every, rec, threads=threads)
    return MomentumSeries(np.array(times), np.array(ps), np.array(ls))


@dataclass
class PdfTable:
    edges: np.ndarray
    density: np.ndarray
    mean: float
    std: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def normal_fit(self) -> np.ndarray:
        """Moment-matched Gaussian density at the bin centers."""
        if self.std == 0:
            return np.where(np.abs(self.centers - self.mean) == 0, np.inf, 0.0)
        return stats.norm.pdf(self.centers, self.mean, self.std)

    def integral(self) -> float:
        return float(np.sum(self.density * self.widths))


def empirical_pdf(samples, bins: int = 100, min_samples: int = 100) -> PdfTable:
    """Normalised fixed-bin histogram over ``[min, max]``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples must be finite")
    lo, hi = float(x.min()), float(x.max())
    # a spread at subnormal scale cannot be split into finite-width bins with finite density
    resolvable = (hi > lo and np.all(np.diff(np.linspace(lo, hi, bins + 1)) > 0)
                  and np.isfinite(bins / (x.size * (hi - lo))))
    if not resolvable:
        warnings.warn("sample spread below floating-point resolution; returning a single-bin density",
                      RuntimeWarning, stacklevel=2)
        half = 0.5 * max(abs(lo), 1.0)
        edges = np.array([lo - half, lo + half])
        return PdfTable(edges, np.array([1.0 / (2 * half)]), float(x.mean()), float(x.std(ddof=1)))
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    density = counts / (x.size * np.diff(edges))
    return PdfTable(edges, density, float(x.mean()), float(x.std(ddof=1)))


def excess_kurtosis(samples) -> float:
    """Fisher (excess) kurtosis; 0 for a Gaussian."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 4:
        raise InsufficientDataError("kurtosis needs at least four samples")
    return float(stats.kurtosis(x, fisher=True, bias=True))


@dataclass
class ContactForceSeries:
    times: np.ndarray    # (T,)
    ids: np.ndarray      # (L0,) large floe ids
    force: np.ndarray    # (T, L0, 2) N
    torque: np.ndarray   # (T, L0) N m

    def component(self, i: int, which: str) -> np.ndarray:
        if which == "x":
            return self.force[:, i, 0]
        if which == "y":
            return self.force[:, i, 1]
        if which == "omega":
            return self.torque[:, i]
        raise ValueError(which)


def contact_force_series(state: SimulationState, n_large: int, n_steps: int,
                         mat: MaterialParams | None = None, settings: IntegratorSettings | None = None,
                         seed=None, inflation: InflationNoise | None = None,
                         large=None, advance_state: bool = True) -> ContactForceSeries:
    """Loads on the ``n_large`` largest floes from all other floes, per step.

    Each recorded value is the sub-step average over its step.  ``large``
    overrides the choice of designated floes (indices into the field).
    """
    mat = mat or MaterialParams()
    settings = settings or IntegratorSettings()
    idx = np.sort(largest_indices(state.field, n_large)) if large is None else np.asarray(large)
    ens = Ensemble(state, 1, mat, settings, inflation, seed=seed, large=idx)
    rec = ens.advance(n_steps, record_cross=True)[0]
    if advance_state:
        out = ens.member_state(0)
        state.field, state.ocean, state.t = out.field, out.ocean, out.t
    times = ens.t - settings.dt * np.arange(n_steps, 0, -1) + settings.dt
    return ContactForceSeries(times, state.field.ids[idx].copy(), rec[:, idx, :2], rec[:, idx, 2])


@dataclass
class LongRunStatistics:
    times: np.ndarray
    ids: np.ndarray
    momentum: np.ndarray    # (T, L0, 2) kg m/s
    omega: np.ndarray       # (T, L0)
    burn_in: int

    def per_floe_pdfs(self, bins: int = 100) -> dict:
        out = {}
        for q, fid in enumerate(self.ids):
            sl = slice(self.burn_in, None)
            out[int(fid)] = {
                "p1": empirical_pdf(self.momentum[sl, q, 0], bins),
                "p2": empirical_pdf(self.momentum[sl, q, 1], bins),
                "omega": empirical_pdf(self.omega[sl, q], bins),
            }
        return out

    def pooled_pdfs(self, bins: int = 100) -> dict:
        sl = slice(self.burn_in, None)
        return {
            "p1": empirical_pdf(self.momentum[sl, :, 0], bins),
            "p2": empirical_pdf(self.momentum[sl, :, 1], bins),
            "omega": empirical_pdf(self.omega[sl], bins),
        }


def long_run_statistics(state: SimulationState, n_large: int, n_steps: int, record_every: int,
                        mat: MaterialParams | None = None, settings: IntegratorSettings | None = None,
                        seed=None, burn_in: float = 0.25) -> LongRunStatistics:
    """Single long trajectory; records large-floe momentum and spin."""
    if not 0 <= burn_in < 1:
        raise ParameterError("burn-in fraction must be in [0, 1)")
    mat = mat or MaterialParams()
    settings = settings or IntegratorSettings()
    idx = np.sort(largest_indices(state.field, n_large))
    ens = Ensemble(state, 1, mat, settings, seed=seed)
    times, mom, om = [], [], []

    def rec(e, step):
        times.append(e.t)
        mom.append(e.mass[idx, None] * e.v[0, idx])
        om.append(e.omega[0, idx].copy())

    ens.run(n_steps, record_every, rec)
    out = ens.member_state(0)
    state.field, state.ocean, state.t = out.field, out.ocean, out.t
    T = len(times)
    return LongRunStatistics(np.array(times), state.field.ids[idx].copy(), np.array(mom),
                             np.array(om), int(burn_in * T))
