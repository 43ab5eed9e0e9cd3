"""Linear stochastic spectral ocean.

The surface current is a finite sum of Fourier modes on the periodic domain.
Each wavenumber ``k != 0`` of the square lattice ``{-K..K}^2`` carries one
geostrophically balanced (GB) mode and two gravity modes; ``k = 0`` carries
the inertial pair.  Every mode amplitude follows a complex Ornstein-Uhlenbeck
process integrated with Euler-Maruyama.

Time in the mode equations is measured in ``time_unit`` seconds (one day by
default), so damping, phase and noise strength are per day.  Amplitudes are
velocities in m/s.

Realness of the physical field is maintained by conjugate bookkeeping: every
mode has a partner (``(k, GB) <-> (-k, GB)``, ``(k, g+) <-> (-k, g-)``,
``(0, +) <-> (0, -)``) whose eigenvector and amplitude are the complex
conjugates.  Only one representative of each pair is integrated; its partner
is overwritten with the conjugate after every update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, OceanStateError, ParameterError

GB = "GB"
GRAVITY_PLUS = "gravity+"
GRAVITY_MINUS = "gravity-"
CLASSES = (GB, GRAVITY_PLUS, GRAVITY_MINUS)

DAY = 86_400.0
PHASE_MARGIN = 0.5


@dataclass(frozen=True)
class ModeClassParams:
    """Per-class SDE coefficients; forcing is ``amplitude * exp(i freq t)``."""

    damping: float = 0.5
    sigma: float = 0.1
    forcing_amplitude: float = 0.0
    forcing_frequency: float = 0.0

    def __post_init__(self):
        if not (self.damping > 0 and math.isfinite(self.damping)):
            raise ParameterError(f"mode damping must be > 0, got {self.damping}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"mode noise strength must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class OceanMode:
    """Read-only view of one stored mode."""

    k: tuple
    cls: str
    damping: float
    phase: float
    sigma: float
    forcing_amplitude: complex
    forcing_frequency: float
    amplitude: complex
    eigenvector: np.ndarray

    def forcing(self, t_model: float) -> complex:
        return self.forcing_amplitude * complex(math.cos(self.forcing_frequency * t_model),
                                                math.sin(self.forcing_frequency * t_model))


class OceanState:
    """All modes as parallel arrays plus the clock (seconds)."""

    def __init__(self, kvec, cls, damping, phase, sigma, forcing_amplitude, forcing_frequency,
                 eig, partner, amp=None, t=0.0, rossby=0.1, side=50_000.0, time_unit=DAY):
        self.kvec = np.asarray(kvec, dtype=np.int64).reshape(-1, 2)
        n = len(self.kvec)
        self.cls = np.asarray(cls, dtype=object).reshape(n)
        self.damping = np.asarray(damping, dtype=float).reshape(n)
        self.phase = np.asarray(phase, dtype=float).reshape(n)
        self.sigma = np.asarray(sigma, dtype=float).reshape(n)
        self.forcing_amplitude = np.asarray(forcing_amplitude, dtype=complex).reshape(n)
        self.forcing_frequency = np.asarray(forcing_frequency, dtype=float).reshape(n)
        self.eig = np.asarray(eig, dtype=complex).reshape(n, 2)
        self.partner = np.asarray(partner, dtype=np.int64).reshape(n)
        self.amp = np.zeros(n, dtype=complex) if amp is None else np.asarray(amp, dtype=complex).reshape(n).copy()
        self.t = float(t)
        self.rossby = float(rossby)
        self.side = float(side)
        self.time_unit = float(time_unit)
        self.kmax = int(np.abs(self.kvec).max()) if n else 0
        self.rep = representatives(self.kvec, self.cls)

    def __len__(self):
        return len(self.kvec)

    def copy(self) -> "OceanState":
        return OceanState(self.kvec, self.cls, self.damping, self.phase, self.sigma,
                          self.forcing_amplitude, self.forcing_frequency, self.eig,
                          self.partner, self.amp, self.t, self.rossby, self.side, self.time_unit)

    @property
    def modes(self) -> list[OceanMode]:
        return [OceanMode((int(k[0]), int(k[1])), c, d, p, s, fa, fw, a, e)
                for k, c, d, p, s, fa, fw, a, e in zip(
                    self.kvec, self.cls, self.damping, self.phase, self.sigma,
                    self.forcing_amplitude, self.forcing_frequency, self.amp, self.eig)]

    def count(self, cls: str | None = None) -> int:
        if cls is None:
            return len(self)
        if cls == "gravity":
            return int(np.sum(self.cls != GB))
        return int(np.sum(self.cls == cls))

    def mask(self, cls: str) -> np.ndarray:
        if cls == "gravity":
            return self.cls != GB
        return self.cls == cls

    @property
    def kernel_args(self):
        """Arrays in the order expected by the compiled step kernels."""
        return (self.kvec, self.eig, self.kmax, self.damping, self.phase, self.sigma,
                self.partner, self.rep, self.forcing_amplitude, self.forcing_frequency)

    def subset(self, keep: np.ndarray) -> "OceanState":
        """Keep the modes selected by a boolean mask (closed under partners)."""
        keep = np.asarray(keep, dtype=bool)
        if np.any(keep != keep[self.partner]):
            raise ConfigurationError("mode subset must be closed under conjugate partners")
        idx = np.flatnonzero(keep)
        remap = -np.ones(len(self), dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        return OceanState(self.kvec[idx], self.cls[idx], self.damping[idx], self.phase[idx],
                          self.sigma[idx], self.forcing_amplitude[idx], self.forcing_frequency[idx],
                          self.eig[idx], remap[self.partner[idx]], self.amp[idx], self.t,
                          self.rossby, self.side, self.time_unit)


def representatives(kvec, cls) -> np.ndarray:
    """One index per conjugate pair: the half lattice ``k1 > 0`` or
    ``k1 == 0, k2 > 0`` for every class, plus the ``+`` inertial mode."""
    kvec = np.asarray(kvec)
    k1, k2 = kvec[:, 0], kvec[:, 1]
    upper = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    inertial = (k1 == 0) & (k2 == 0) & (np.asarray(cls) == GRAVITY_PLUS)
    return np.flatnonzero(upper | inertial).astype(np.int64)


def _gauge(v: np.ndarray) -> np.ndarray:
    # make the largest velocity component real positive (eigh phase is arbitrary)
    j = int(np.argmax(np.abs(v) - 1e-12 * np.arange(len(v))))
    return v * (abs(v[j]) / v[j])


def shallow_water_operator(k1: float, k2: float, rossby: float) -> np.ndarray:
    """Hermitian generator ``H`` with ``d/dt (u1, u2, eta) = i H (u1, u2, eta)``."""
    f = 1.0 / rossby
    return np.array([[0.0, -1j * f, -k1],
                     [1j * f, 0.0, -k2],
                     [-k1, -k2, 0.0]], dtype=complex)


def gravity_phase(k1: float, k2: float, rossby: float) -> float:
    """Positive gravity-wave frequency ``Ro^-1 sqrt(1 + Ro^2 |k|^2)``."""
    return math.sqrt(1.0 + rossby**2 * (k1 * k1 + k2 * k2)) / rossby


def _gravity_pair(k1: int, k2: int, rossby: float):
    vals, vecs = np.linalg.eigh(shallow_water_operator(k1, k2, rossby))
    out = []
    for col in (2, 0):  # +omega then -omega
        vel = vecs[:2, col]
        vel = _gauge(vel / np.linalg.norm(vel))
        out.append((float(vals[col]), vel))
    return out


def build_mode_set(k_max: int, rossby: float = 0.1, gb: ModeClassParams | None = None,
                   gravity: ModeClassParams | None = None, include_gravity: bool = True,
                   side: float = 50_000.0, time_unit: float = DAY) -> OceanState:
    """Full-lattice mode set with zero amplitudes.

    ``(2K+1)^2 - 1`` GB modes and ``2((2K+1)^2 - 1) + 2`` gravity modes
    (the latter dropped when ``include_gravity`` is false).
    """
    if k_max < 0:
        raise ParameterError("k_max must be >= 0")
    if not rossby > 0:
        raise ParameterError("Rossby number must be > 0")
    gb = gb or ModeClassParams(0.5, 0.1)
    gravity = gravity or ModeClassParams(0.5, 0.05)
    rows = []  # (k1, k2, cls, phase, eigvec, params)
    for k1 in range(-k_max, k_max + 1):
        for k2 in range(-k_max, k_max + 1):
            if k1 == 0 and k2 == 0:
                if include_gravity:
                    f = 1.0 / rossby
                    v = np.array([1.0, 1j]) / math.sqrt(2.0)
                    rows.append((0, 0, GRAVITY_PLUS, f, v, gravity))
                    rows.append((0, 0, GRAVITY_MINUS, -f, v.conj(), gravity))
                continue
            norm = math.hypot(k1, k2)
            rows.append((k1, k2, GB, 0.0, np.array([-1j * k2, 1j * k1]) / norm, gb))
            if include_gravity:
                (pp, vp), (pm, vm) = _gravity_pair(k1, k2, rossby)
                rows.append((k1, k2, GRAVITY_PLUS, pp, vp, gravity))
                rows.append((k1, k2, GRAVITY_MINUS, pm, vm, gravity))

    kvec = np.array([(r[0], r[1]) for r in rows], dtype=np.int64).reshape(-1, 2)
    cls = np.array([r[2] for r in rows], dtype=object)
    phase = np.array([r[3] for r in rows], dtype=float)
    eig = np.array([r[4] for r in rows], dtype=complex).reshape(-1, 2)
    damping = np.array([r[5].damping for r in rows], dtype=float)
    sigma = np.array([r[5].sigma for r in rows], dtype=float)
    f_amp = np.array([r[5].forcing_amplitude for r in rows], dtype=complex)
    f_freq = np.array([r[5].forcing_frequency for r in rows], dtype=float)

    flip = {GB: GB, GRAVITY_PLUS: GRAVITY_MINUS, GRAVITY_MINUS: GRAVITY_PLUS}
    index = {(int(k[0]), int(k[1]), c): i for i, (k, c) in enumerate(zip(kvec, cls))}
    partner = np.array([index[(-int(k[0]), -int(k[1]), flip[c])] for k, c in zip(kvec, cls)],
                       dtype=np.int64)
    # partners carry exactly conjugate data so the summed field is real
    for m in representatives(kvec, cls):
        p = partner[m]
        eig[p] = eig[m].conj()
        phase[p] = -phase[m]
        f_amp[p] = np.conj(f_amp[m])
        f_freq[p] = -f_freq[m]
    return OceanState(kvec, cls, damping, phase, sigma, f_amp, f_freq, eig, partner,
                      rossby=rossby, side=side, time_unit=time_unit)


def check_phase_margin(state: OceanState, dt_seconds: float, margin: float = PHASE_MARGIN):
    """Raise if the fastest mode rotates more than ``margin`` rad per step."""
    if len(state) == 0:
        return
    worst = float(np.max(np.abs(state.phase))) * dt_seconds / state.time_unit
    if worst > margin:
        raise ConfigurationError(
            f"time step too coarse for the fastest ocean mode: |phase| dt = {worst:.3g} > {margin}")


def symmetrize(state: OceanState) -> OceanState:
    """Overwrite every partner amplitude with the conjugate of its representative."""
    state.amp[state.partner[state.rep]] = np.conj(state.amp[state.rep])
    return state


def symmetry_defect(state: OceanState) -> float:
    if len(state) == 0:
        return 0.0
    return float(np.max(np.abs(state.amp[state.partner] - np.conj(state.amp))))


def check_symmetry(state: OceanState, tol: float = 1e-12):
    scale = max(1.0, float(np.max(np.abs(state.amp), initial=0.0)))
    defect = symmetry_defect(state)
    if defect > tol * scale:
        raise OceanStateError(f"conjugate symmetry violated by {defect:.3g}")


def draw_stationary(state: OceanState, rng: np.random.Generator) -> OceanState:
    """Sample representative amplitudes from the stationary law of each mode.

    Mean ``f / (d - i phi)`` (forcing frozen at the current time), variance
    ``sigma^2 / (2 d)``.
    """
    rep = state.rep
    t_model = state.t / state.time_unit
    forcing = state.forcing_amplitude[rep] * np.exp(1j * state.forcing_frequency[rep] * t_model)
    mean = forcing / (state.damping[rep] - 1j * state.phase[rep])
    std = state.sigma[rep] / np.sqrt(2.0 * state.damping[rep])
    xi = rng.standard_normal((len(rep), 2))
    state.amp[rep] = mean + std * (xi[:, 0] + 1j * xi[:, 1]) / math.sqrt(2.0)
    return symmetrize(state)


def step_modes(state: OceanState, dt: float, rng: np.random.Generator | None = None,
               xi: np.ndarray | None = None) -> OceanState:
    """One Euler-Maruyama step of length ``dt`` (in ``time_unit``), in place.

    ``xi`` (shape ``(n_rep, 2)``) overrides the normals drawn from ``rng``.
    """
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    if xi is None:
        xi = rng.standard_normal((len(state.rep), 2)) if rng is not None else np.zeros((len(state.rep), 2))
    _kernels.ocean_step(state.amp, state.damping, state.phase, state.sigma, state.partner,
                        state.rep, state.forcing_amplitude, state.forcing_frequency,
                        state.t / state.time_unit, dt, np.ascontiguousarray(xi, dtype=float))
    state.t += dt * state.time_unit
    return state


def run_modes(state: OceanState, dt: float, n_steps: int, rng: np.random.Generator,
              record_every: int = 0, chunk: int = 100_000) -> np.ndarray:
    """Advance ``n_steps`` steps; return amplitudes recorded every
    ``record_every`` steps (empty when 0)."""
    n_rec = (n_steps + record_every - 1) // record_every if record_every else 0
    trace = np.empty((n_rec, len(state)), dtype=complex)
    if record_every:
        # chunks cover whole recording periods so indices stay aligned
        chunk = max(record_every, (chunk // record_every) * record_every)
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        xi = rng.standard_normal((k, len(state.rep), 2))
        n_part = (k + record_every - 1) // record_every if record_every else 0
        part = np.empty((n_part, len(state)), dtype=complex)
        t_model = _kernels.ocean_run(state.amp, state.damping, state.phase, state.sigma,
                                     state.partner, state.rep, state.forcing_amplitude,
                                     state.forcing_frequency, state.t / state.time_unit, dt, xi,
                                     part, max(record_every, 1))
        state.t = t_model * state.time_unit
        if record_every:
            start = done // record_every
            trace[start:start + len(part)] = part
        done += k
    return trace


def _phases(state: OceanState, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    kappa = 2.0 * math.pi / state.side
    return np.exp(1j * kappa * (points @ state.kvec.T.astype(float)))  # (P, M)


def _assert_real(values: np.ndarray, what: str, tol: float = 1e-10):
    scale = float(np.max(np.abs(values.real), initial=0.0))
    resid = float(np.max(np.abs(values.imag), initial=0.0))
    if resid > tol * max(scale, 1e-300) and resid > 1e-300:
        raise OceanStateError(f"reconstructed {what} is not real (imaginary residue {resid:.3g})")


def velocity_at(state: OceanState, points) -> np.ndarray:
    """Ocean velocity (m/s) at points of shape ``(P, 2)`` or ``(2,)``."""
    single = np.ndim(points) == 1
    e = _phases(state, points)
    coef = state.amp[:, None] * state.eig  # (M, 2)
    u = e @ coef
    _assert_real(u, "velocity")
    u = u.real
    return u[0] if single else u


def curl_at(state: OceanState, points) -> np.ndarray:
    """Vertical vorticity (1/s) of the ocean velocity at the points."""
    single = np.ndim(points) == 1
    e = _phases(state, points)
    kappa = 2.0 * math.pi / state.side
    k1 = state.kvec[:, 0].astype(float)
    k2 = state.kvec[:, 1].astype(float)
    coef = 1j * kappa * (k1 * state.eig[:, 1] - k2 * state.eig[:, 0]) * state.amp
    w = e @ coef
    _assert_real(w, "curl")
    return float(w.real[0]) if single else w.real


def ocean_at_compiled(state: OceanState, points) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and curl through the compiled kernel used by the integrator."""
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    uo = np.zeros((len(points), 2))
    curl = np.zeros(len(points))
    p = np.empty(2 * state.kmax + 1, dtype=complex)
    q = np.empty(2 * state.kmax + 1, dtype=complex)
    _kernels.ocean_at(points, state.amp, state.kvec, state.eig, state.kmax, state.side,
                      uo, curl, p, q)
    return uo, curl


def divergence_at(state: OceanState, points) -> np.ndarray:
    """Spectral divergence ``Re sum i kappa (k . r) u e``."""
    e = _phases(state, points)
    kappa = 2.0 * math.pi / state.side
    coef = 1j * kappa * (state.kvec[:, 0] * state.eig[:, 0] + state.kvec[:, 1] * state.eig[:, 1]) * state.amp
    return (e @ coef).real


def grid_snapshot(state: OceanState, n: int = 64):
    """Velocity and curl on an ``n x n`` cell-corner grid.

    Returns ``(x1, x2, u1, u2, curl)`` each of shape ``(n, n)`` with
    ``[i, j]`` at ``(i side / n, j side / n)``.
    """
    g = np.arange(n) * state.side / n
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    u = velocity_at(state, pts)
    w = curl_at(state, pts)
    return x1, x2, u[:, 0].reshape(n, n), u[:, 1].reshape(n, n), w.reshape(n, n)
