"""Lagrangian data assimilation with a sequential ensemble adjustment Kalman filter.

State vector layout (one row per member), for ``L`` floes and ``M`` ocean
modes::

    [x1 (L) | x2 (L) | angle (L) | v1 (L) | v2 (L) | omega (L) | Re amp (M) | Im amp (M)]

Positions are periodic with the domain side and angles with ``2 pi``; their
anomalies are taken by minimum image about the ensemble mean and the
components are wrapped back after every update.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, ParameterError, UndefinedScoreError
from .floes import FloeField, MaterialParams, minimum_image
from .integrator import (Ensemble, InflationNoise, IntegratorSettings, NoiseStreams, SimulationState,
                         seed_sequence)
from .ocean import GB, OceanState, draw_stationary, ocean_at_compiled
from .superfloe import ReductionConfig, bare_truncation, largest_indices, reduce
from .uq import ContactForceSeries, contact_force_series

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


# -- observations ---------------------------------------------------------

@dataclass
class ObservationRecord:
    time: float
    ids: np.ndarray          # (K,)
    position: np.ndarray     # (K, 2) m
    angle: np.ndarray        # (K,) rad
    sigma_x: float
    sigma_angle: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_angle > 0):
            raise ParameterError("observation noise std devs must be > 0")


def observe(field: FloeField, ids, sigma_x: float, sigma_angle: float, rng: np.random.Generator,
            time: float = 0.0, noisy: bool = True) -> ObservationRecord:
    """Noisy positions and angles of the floes with the given ids.

    With ``noisy=False`` (or zero std devs) the exact values are returned;
    the record still carries the nominal std devs for the update.
    """
    if sigma_x < 0 or sigma_angle < 0:
        raise ParameterError("observation noise std devs must be >= 0")
    ids = np.asarray(ids, dtype=np.int64)
    idx = np.array([field.index_of(i) for i in ids], dtype=np.int64)
    pos = field.position[idx].copy()
    ang = field.angle[idx].copy()
    if noisy and (sigma_x > 0 or sigma_angle > 0):
        noise = rng.standard_normal((len(idx), 3))
        pos = field.domain.wrap(pos + sigma_x * noise[:, :2])
        ang = np.mod(ang + sigma_angle * noise[:, 2], TWO_PI)
        ang[ang >= TWO_PI] = 0.0
    return ObservationRecord(time, ids, pos, ang, max(sigma_x, 1e-300), max(sigma_angle, 1e-300))


# -- state vector -----------------------------------------------------------

@dataclass(frozen=True)
class StateLayout:
    n_floes: int
    n_modes: int
    side: float

    @property
    def size(self) -> int:
        return 6 * self.n_floes + 2 * self.n_modes

    def block(self, name: str) -> slice:
        L, M = self.n_floes, self.n_modes
        starts = {"x1": 0, "x2": L, "angle": 2 * L, "v1": 3 * L, "v2": 4 * L, "omega": 5 * L,
                  "re": 6 * L, "im": 6 * L + M}
        n = M if name in ("re", "im") else L
        return slice(starts[name], starts[name] + n)

    def periods(self) -> np.ndarray:
        """Period of every component (0 for non-periodic)."""
        p = np.zeros(self.size)
        p[self.block("x1")] = self.side
        p[self.block("x2")] = self.side
        p[self.block("angle")] = TWO_PI
        return p

    def pack(self, ens: Ensemble) -> np.ndarray:
        N = ens.n_members
        return np.concatenate([ens.x[:, :, 0], ens.x[:, :, 1], ens.angle, ens.v[:, :, 0],
                               ens.v[:, :, 1], ens.omega, ens.amp.real, ens.amp.imag],
                              axis=1).reshape(N, self.size)

    def unpack(self, S: np.ndarray, ens: Ensemble):
        ens.x[:, :, 0] = S[:, self.block("x1")]
        ens.x[:, :, 1] = S[:, self.block("x2")]
        ens.angle[:] = S[:, self.block("angle")]
        ens.v[:, :, 0] = S[:, self.block("v1")]
        ens.v[:, :, 1] = S[:, self.block("v2")]
        ens.omega[:] = S[:, self.block("omega")]
        ens.amp[:] = S[:, self.block("re")] + 1j * S[:, self.block("im")]
        # conjugate partners follow their representatives
        rep, part = ens.ocean.rep, ens.ocean.partner
        ens.amp[:, part[rep]] = np.conj(ens.amp[:, rep])


def _wrap(values, period):
    w = np.mod(values, period)
    return np.where(w >= period, 0.0, w)


def _anomalies(col: np.ndarray, period: float):
    """Ensemble mean and anomalies of one component (circular if periodic)."""
    if period > 0:
        ref = col[0]
        rel = minimum_image(col - ref, period)
        mean = float(_wrap(ref + rel.mean(), period))
        return mean, minimum_image(col - mean, period)
    mean = float(col.mean())
    return mean, col - mean


def eakf_update(S: np.ndarray, obs_index, obs_value, obs_var, periods=None) -> np.ndarray:
    """Sequential scalar EAKF update of the ensemble ``S (N, D)``.

    Each observation directly observes component ``obs_index[k]`` with
    error variance ``obs_var[k]``.  Returns the updated copy.
    """
    S = np.array(S, dtype=float, copy=True)
    N, D = S.shape
    if N < 2:
        raise ParameterError("the ensemble needs at least two members")
    obs_index = np.atleast_1d(np.asarray(obs_index, dtype=np.int64))
    obs_value = np.atleast_1d(np.asarray(obs_value, dtype=float))
    obs_var = np.broadcast_to(np.asarray(obs_var, dtype=float), obs_value.shape)
    if np.any(obs_var <= 0):
        raise ParameterError("observation variance must be > 0")
    periods = np.zeros(D) if periods is None else np.asarray(periods, dtype=float)
    periodic = periods > 0
    for j, y, r in zip(obs_index, obs_value, obs_var):
        mean_y, dy = _anomalies(S[:, j], periods[j])
        var_p = float(dy @ dy) / (N - 1)
        if var_p <= 0:
            warnings.warn(f"zero prior spread in observed component {j}; observation skipped",
                          RuntimeWarning, stacklevel=2)
            continue
        innov = minimum_image(y - mean_y, periods[j]) if periods[j] > 0 else y - mean_y
        var_u = 1.0 / (1.0 / var_p + 1.0 / r)
        shift = var_u * innov / r                # posterior mean minus prior mean
        incr = shift + (math.sqrt(var_u / var_p) - 1.0) * dy
        # anomalies of every component (minimum image where periodic)
        A = S - S.mean(axis=0)
        if periodic.any():
            cols = np.flatnonzero(periodic)
            for c in cols:
                _, A[:, c] = _anomalies(S[:, c], periods[c])
        beta = (dy @ A) / (N - 1) / var_p        # regression coefficients (D,)
        S += np.outer(incr, beta)
        if periodic.any():
            S[:, periodic] = _wrap(S[:, periodic], periods[periodic])
    return S


def kalman_scalar(mean_p: float, var_p: float, y: float, var_o: float):
    """Closed-form scalar posterior ``(mean, variance)``."""
    var_u = 1.0 / (1.0 / var_p + 1.0 / var_o)
    return var_u * (mean_p / var_p + y / var_o), var_u


# -- inflation ------------------------------------------------------------

@dataclass
class InflationCoefficients:
    ids: np.ndarray
    sigma_force: np.ndarray    # (L0, 2) N
    sigma_torque: np.ndarray   # (L0,) N m
    n_steps: int
    lag: int

    def to_dict(self) -> dict:
        return {"ids": [int(i) for i in self.ids], "sigma_force": self.sigma_force.tolist(),
                "sigma_torque": self.sigma_torque.tolist(), "n_steps": self.n_steps,
                "lag": self.lag}

    @classmethod
    def from_dict(cls, d) -> "InflationCoefficients":
        return cls(np.asarray(d["ids"], dtype=np.int64), np.asarray(d["sigma_force"], dtype=float),
                   np.asarray(d["sigma_torque"], dtype=float), int(d["n_steps"]), int(d["lag"]))

    def noise_for(self, field: FloeField) -> InflationNoise:
        """Per-floe noise for ``field``; floes without coefficients get none."""
        sf = np.zeros((len(field), 2))
        st = np.zeros(len(field))
        for q, fid in enumerate(self.ids):
            hit = np.flatnonzero(field.ids == fid)
            if len(hit):
                sf[hit[0]] = self.sigma_force[q]
                st[hit[0]] = self.sigma_torque[q]
        return InflationNoise(sf, st, enabled=True)


def lagged_std(series, lag: int) -> np.ndarray:
    """Sample std (ddof 1) of ``f[t + lag] - f[t]`` along axis 0."""
    F = np.asarray(series, dtype=float)
    n = F.shape[0]
    if lag < 1:
        raise ParameterError("lag must be >= 1")
    if n <= lag + 1:
        raise InsufficientDataError(f"series of length {n} too short for lag {lag}")
    diff = F[lag:] - F[:-lag]
    return diff.std(axis=0, ddof=1)


def compute_inflation(series: ContactForceSeries, lag: int) -> InflationCoefficients:
    """Additive-noise std devs from lagged differences of contact loads."""
    sf = lagged_std(series.force, lag)
    st = lagged_std(series.torque, lag)
    return InflationCoefficients(series.ids.copy(), sf, st, len(series.times), lag)


def inflation_from_superfloes(state: SimulationState, cfg: ReductionConfig, n_steps: int,
                              lag: int, spinup: int = 1000, mat: MaterialParams | None = None,
                              settings: IntegratorSettings | None = None, seed=None):
    """Reduce ``state`` to superfloes, run it and derive inflation coefficients.

    Returns ``(coefficients, series)``.
    """
    mat = mat or MaterialParams()
    settings = settings or IntegratorSettings()
    reduced, _ = reduce(state.field, cfg)
    sim = SimulationState(reduced, state.ocean.copy(), state.t)
    ss = seed_sequence(seed)
    a, b = ss.spawn(2)
    large = np.arange(cfg.n_large)
    if spinup:
        contact_force_series(sim, cfg.n_large, spinup, mat, settings, seed=a, large=large)
    series = contact_force_series(sim, cfg.n_large, n_steps, mat, settings, seed=b, large=large)
    return compute_inflation(series, lag), series


# -- skill scores ---------------------------------------------------------

def rmse(truth, estimate) -> float:
    t = np.asarray(truth, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if t.shape != e.shape:
        raise ParameterError("series lengths differ")
    if t.size < 2:
        raise InsufficientDataError("need at least two values")
    return float(np.sqrt(np.mean((e - t) ** 2)))


def pcc(truth, estimate) -> float:
    t = np.asarray(truth, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if t.shape != e.shape:
        raise ParameterError("series lengths differ")
    if t.size < 2:
        raise InsufficientDataError("need at least two values")
    ta = t - t.mean()
    ea = e - e.mean()
    nt, ne = math.sqrt(float(ta @ ta)), math.sqrt(float(ea @ ea))
    if nt == 0 or ne == 0:
        raise UndefinedScoreError("correlation undefined for a constant series")
    return float(np.clip((ta @ ea) / (nt * ne), -1.0, 1.0))


# -- twin experiment --------------------------------------------------------

FORECAST_MODELS = ("full", "bare", "inflation")


@dataclass
class DAScenario:
    forecast_model: str = "inflation"
    n_large: int = 6                  # observed floes (L0)
    n_super: int = 6                  # superfloes used to estimate the inflation
    n_members: int = 1000
    n_cycles: int = 20
    obs_interval_steps: int = 100
    sigma_x: float = 80.0
    sigma_angle: float = 0.01
    forecast_gravity: bool = True     # False keeps only GB modes in the forecast ocean
    inflation_steps: int = 10_000
    inflation_spinup: int = 1_000
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.forecast_model not in FORECAST_MODELS:
            raise ConfigurationError(f"forecast model must be one of {FORECAST_MODELS}")
        if self.n_members < 2:
            raise ConfigurationError("the ensemble needs at least two members")
        if self.obs_interval_steps < 1 or self.n_cycles < 1:
            raise ConfigurationError("observation interval and cycle count must be >= 1")


@dataclass
class DAResult:
    scenario: DAScenario
    times: np.ndarray                 # (C,)
    observed_ids: np.ndarray
    velocity_truth: np.ndarray        # (C, K, 2)
    velocity_mean: np.ndarray
    velocity_spread: np.ndarray
    mode_k: np.ndarray                # (G, 2) GB representative wavenumbers
    mode_truth: np.ndarray            # (C, G) complex
    mode_mean: np.ndarray
    mode_spread: np.ndarray           # (C, G) std of |anomaly|
    inflation: InflationCoefficients | None = None
    extra: dict = dc_field(default_factory=dict)

    def scores(self) -> dict:
        mt = np.concatenate([self.mode_truth.real, self.mode_truth.imag], axis=1)
        me = np.concatenate([self.mode_mean.real, self.mode_mean.imag], axis=1)
        return {
            "ocean_gb": {"rmse": rmse(mt, me), "pcc": pcc(mt, me)},
            "floe_velocity": {"rmse": rmse(self.velocity_truth, self.velocity_mean),
                              "pcc": pcc(self.velocity_truth, self.velocity_mean)},
        }


def _gb_representatives(ocean: OceanState):
    rep = ocean.rep
    return rep[ocean.cls[rep] == GB]


def _match_modes(src: OceanState, dst: OceanState, idx_src):
    key = {(int(k[0]), int(k[1]), c): i for i, (k, c) in enumerate(zip(dst.kvec, dst.cls))}
    try:
        return np.array([key[(int(src.kvec[i, 0]), int(src.kvec[i, 1]), src.cls[i])] for i in idx_src],
                        dtype=np.int64)
    except KeyError as exc:
        raise ConfigurationError(f"forecast ocean lacks mode {exc}") from None


def initial_ensemble(truth: SimulationState, forecast_field: FloeField, forecast_ocean: OceanState,
                     n_members: int, sigma_x: float, sigma_angle: float, rng: np.random.Generator,
                     mat: MaterialParams, settings: IntegratorSettings, inflation: InflationNoise | None,
                     streams, large=None) -> Ensemble:
    """Members start at noisy copies of the forecast floes with ocean
    amplitudes drawn from the stationary law and floe velocities equal to
    their member's ocean velocity (free drift)."""
    template = SimulationState(forecast_field, forecast_ocean, truth.t)
    ens = Ensemble(template, n_members, mat, settings, inflation, streams=streams, large=large)
    side = forecast_field.domain.side
    for b in range(n_members):
        oc = forecast_ocean.copy()
        draw_stationary(oc, rng)
        ens.amp[b] = oc.amp
        noise = rng.standard_normal((len(forecast_field), 3))
        ens.x[b] = _wrap(forecast_field.position + sigma_x * noise[:, :2], side)
        ens.angle[b] = _wrap(forecast_field.angle + sigma_angle * noise[:, 2], TWO_PI)
        uo, curl = ocean_at_compiled(oc, ens.x[b])
        ens.v[b] = uo
        ens.omega[b] = 0.5 * curl
    return ens


def assimilate(truth: SimulationState, scenario: DAScenario, mat: MaterialParams | None = None,
               settings: IntegratorSettings | None = None,
               inflation: InflationCoefficients | None = None) -> DAResult:
    """Twin experiment: the full truth is observed every ``obs_interval_steps``.

    ``truth`` is advanced in place.  The forecast floes are all floes
    (``full``) or the ``n_large`` largest (``bare`` / ``inflation``); with
    ``forecast_gravity = False`` the forecast ocean keeps only GB modes.
    """
    sc = scenario
    mat = mat or MaterialParams()
    settings = settings or IntegratorSettings()
    ss = seed_sequence(sc.seed)
    s_truth, s_obs, s_init, s_members, s_infl = ss.spawn(5)
    obs_rng = np.random.default_rng(s_obs)
    init_rng = np.random.default_rng(s_init)

    large_idx = np.sort(largest_indices(truth.field, sc.n_large))
    obs_ids = truth.field.ids[large_idx].copy()
    if sc.forecast_model == "full":
        fc_field = truth.field.copy()
    else:
        fc_field = bare_truncation(truth.field, sc.n_large)
    missing = set(obs_ids.tolist()) - set(fc_field.ids.tolist())
    if missing:
        raise ConfigurationError(f"observed floes {sorted(missing)} absent from the forecast model")
    fc_ocean = truth.ocean.copy()
    if not sc.forecast_gravity:
        fc_ocean = fc_ocean.subset(fc_ocean.mask(GB))

    noise = None
    if sc.forecast_model == "inflation":
        if inflation is None:
            inflation, _ = inflation_from_superfloes(
                truth.copy(), ReductionConfig(sc.n_large, sc.n_super), sc.inflation_steps,
                sc.obs_interval_steps, sc.inflation_spinup, mat, settings, seed=s_infl)
        noise = inflation.noise_for(fc_field)

    streams = NoiseStreams.spawn_members(s_members, sc.n_members)
    ens = initial_ensemble(truth, fc_field, fc_ocean, sc.n_members, sc.sigma_x, sc.sigma_angle,
                           init_rng, mat, settings, noise, streams)
    truth_ens = Ensemble(truth, 1, mat, settings, None, streams=[NoiseStreams.from_seed(s_truth)])

    layout = StateLayout(len(fc_field), len(fc_ocean), fc_field.domain.side)
    periods = layout.periods()
    fc_obs_idx = np.array([fc_field.index_of(i) for i in obs_ids], dtype=np.int64)
    obs_index = np.concatenate([layout.block("x1").start + fc_obs_idx,
                                layout.block("x2").start + fc_obs_idx,
                                layout.block("angle").start + fc_obs_idx])

    gb_fc = _gb_representatives(fc_ocean)
    gb_truth = _match_modes(fc_ocean, truth.ocean, gb_fc)
    tr_obs_idx = large_idx

    C = sc.n_cycles
    K = len(obs_ids)
    G = len(gb_fc)
    out = dict(times=np.zeros(C), vt=np.zeros((C, K, 2)), vm=np.zeros((C, K, 2)),
               vs=np.zeros((C, K, 2)), mt=np.zeros((C, G), complex), mm=np.zeros((C, G), complex),
               ms=np.zeros((C, G)))
    for c in range(C):
        truth_ens.advance(sc.obs_interval_steps)
        ens.advance(sc.obs_interval_steps, threads=sc.threads)
        tstate = truth_ens.member_state(0)
        rec = observe(tstate.field, obs_ids, sc.sigma_x, sc.sigma_angle, obs_rng, time=tstate.t)
        y = np.concatenate([rec.position[:, 0], rec.position[:, 1], rec.angle])
        r = np.concatenate([np.full(K, sc.sigma_x**2), np.full(K, sc.sigma_x**2),
                            np.full(K, sc.sigma_angle**2)])
        S = layout.pack(ens)
        S = eakf_update(S, obs_index, y, r, periods)
        layout.unpack(S, ens)
        out["times"][c] = tstate.t
        out["vt"][c] = tstate.field.velocity[tr_obs_idx]
        out["vm"][c] = ens.v[:, fc_obs_idx].mean(axis=0)
        out["vs"][c] = ens.v[:, fc_obs_idx].std(axis=0, ddof=1)
        out["mt"][c] = tstate.ocean.amp[gb_truth]
        amps = ens.amp[:, gb_fc]
        out["mm"][c] = amps.mean(axis=0)
        out["ms"][c] = np.sqrt(np.mean(np.abs(amps - amps.mean(axis=0)) ** 2, axis=0) * sc.n_members
                               / (sc.n_members - 1))
        log.info("cycle %d/%d t=%.0f s", c + 1, C, tstate.t)
    final = truth_ens.member_state(0)
    truth.field, truth.ocean, truth.t = final.field, final.ocean, final.t
    return DAResult(sc, out["times"], obs_ids, out["vt"], out["vm"], out["vs"],
                    fc_ocean.kvec[gb_fc].copy(), out["mt"], out["mm"], out["ms"], inflation,
                    extra={"forecast_floes": len(fc_field), "forecast_modes": len(fc_ocean),
                           "substeps": ens.stats.substeps})
