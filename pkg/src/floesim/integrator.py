"""Euler-Maruyama time stepping of the coupled floe-ocean system.

One step of length ``dt``:

1. contact forces and torques from the current configuration;
2. ocean velocity and curl at every floe center (held fixed for the step);
3. velocity and spin update from contact, quadratic drag and optional
   additive inflation noise;
4. position and angle update with the new velocities, wrapped periodically;
5. Euler-Maruyama update of the ocean modes.

Stiff contacts are handled by splitting steps 1 and 3-4 into ``n`` equal
sub-steps.  ``n`` is the smallest count keeping every active contact's
oscillation period above ten sub-steps and every linearised damping rate
(contact shear, drag force, drag torque) below one per sub-step; it is
re-evaluated during the step and the step is redone when contacts appear
that need more.

The heavy lifting is in :mod:`floesim._kernels`; :class:`Ensemble` advances
many members that share floe geometry (positions, velocities and ocean
amplitudes differ) and is what the UQ and DA drivers use.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DegenerateContactError, NumericalBlowupError, ParameterError
from .floes import FloeField, MaterialParams
from .ocean import OceanState, check_phase_margin

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass
class SimulationState:
    field: FloeField
    ocean: OceanState
    t: float = 0.0

    def copy(self) -> "SimulationState":
        return SimulationState(self.field.copy(), self.ocean.copy(), self.t)


@dataclass
class InflationNoise:
    """Additive noise std devs: force ``(L, 2)`` in N, torque ``(L,)`` in N m."""

    sigma_force: np.ndarray
    sigma_torque: np.ndarray
    enabled: bool = True

    def __post_init__(self):
        self.sigma_force = np.asarray(self.sigma_force, dtype=float).reshape(-1, 2)
        self.sigma_torque = np.asarray(self.sigma_torque, dtype=float).reshape(-1)
        if len(self.sigma_force) != len(self.sigma_torque):
            raise ParameterError("force and torque noise must cover the same floes")
        if np.any(self.sigma_force < 0) or np.any(self.sigma_torque < 0):
            raise ParameterError("inflation std devs must be >= 0")

    @classmethod
    def off(cls, n_floes: int) -> "InflationNoise":
        return cls(np.zeros((n_floes, 2)), np.zeros(n_floes), enabled=False)

    def packed(self) -> np.ndarray:
        return np.column_stack([self.sigma_force, self.sigma_torque])


@dataclass
class IntegratorSettings:
    dt: float = 25.0
    substep: bool = True
    max_substeps: int = 100_000
    neighbor_grid: bool = True
    thickness_ref: float = 0.0   # > 0 scales contact chords by min(h)/thickness_ref
    drag: bool = True
    chunk_steps: int = 512       # noise is drawn in blocks of this many steps

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.max_substeps < 1:
            raise ParameterError("max_substeps must be >= 1")


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None or an existing SeedSequence."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


@dataclass
class NoiseStreams:
    """Independent generators for ocean forcing and inflation noise."""

    ocean: np.random.Generator
    inflation: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "NoiseStreams":
        ss = seed_sequence(seed)
        a, b = ss.spawn(2)
        return cls(np.random.default_rng(a), np.random.default_rng(b))

    @classmethod
    def spawn_members(cls, seed, n: int) -> list["NoiseStreams"]:
        ss = seed_sequence(seed)
        return [cls.from_seed(child) for child in ss.spawn(n)]


@dataclass
class StepStats:
    steps: int = 0
    substeps: int = 0
    retries: int = 0
    max_substeps: int = 0

    def add(self, arr):
        self.substeps += int(arr[0])
        self.retries += int(arr[1])
        self.max_substeps = max(self.max_substeps, int(arr[2]))


def drag_coefficient(radius, mat: MaterialParams):
    """``d_o rho_o pi r^2`` (force per squared slip speed)."""
    return mat.drag * mat.rho_ocean * np.pi * np.asarray(radius, dtype=float) ** 2


def drag_force(floe, u_ocean, mat: MaterialParams) -> np.ndarray:
    """Quadratic ocean drag on a floe: ``alpha (u - v) |u - v|``."""
    slip = np.asarray(u_ocean, dtype=float) - np.asarray(floe.v, dtype=float)
    return drag_coefficient(floe.r, mat) * slip * float(np.hypot(*slip))


def drag_torque(floe, curl, mat: MaterialParams) -> float:
    """Quadratic ocean torque: ``alpha r^2 s |s|`` with ``s = curl / 2 - omega``."""
    s = 0.5 * float(curl) - floe.omega
    return float(drag_coefficient(floe.r, mat)) * floe.r**2 * s * abs(s)


def _status_error(status, ids, t0, dt, member=None):
    code, i, j, s = (int(v) for v in status)
    t = t0 + (s + 1) * dt
    if code == _kernels.DEGENERATE:
        return DegenerateContactError(ids[i], ids[j], f"coincident floe centers for pair "
                                      f"({ids[i]}, {ids[j]}) at t={t:.1f} s"
                                      + (f" (member {member})" if member is not None else ""))
    if code == _kernels.BLOWUP:
        who = int(ids[i]) if i >= 0 else None
        detail = "" if i >= 0 else f"ocean mode {j} non-finite"
        return NumericalBlowupError(who, t, member, detail)
    if code == _kernels.TOO_STIFF:
        return NumericalBlowupError(None, t, member, f"contact needs {j} sub-steps, above the limit")
    return None


class Ensemble:
    """Members sharing floe geometry (r, h, ids) and mode structure.

    Member arrays: ``x (N, L, 2)``, ``angle (N, L)``, ``v (N, L, 2)``,
    ``omega (N, L)``, ``amp (N, M)``.  ``large`` flags floes whose contact
    loads from non-large floes are recorded on request.
    """

    def __init__(self, template: SimulationState, n_members: int, mat: MaterialParams,
                 settings: IntegratorSettings | None = None, inflation: InflationNoise | None = None,
                 streams: list[NoiseStreams] | None = None, seed=None, large=None):
        if n_members < 1:
            raise ParameterError("ensemble needs at least one member")
        self.settings = settings or IntegratorSettings()
        self.mat = mat
        f = template.field
        self.domain = f.domain
        self.ids = f.ids.copy()
        self.radius = f.radius.copy()
        self.thickness = f.thickness.copy()
        self.is_super = f.is_super.copy()
        self.rho_ice = f.rho_ice
        self.mass = f.mass
        self.inertia = f.inertia
        L = len(f)
        self.group = np.zeros(L, dtype=np.int8)
        if large is not None:
            self.group[np.asarray(large)] = 1
        self.ocean = template.ocean.copy()
        check_phase_margin(self.ocean, self.settings.dt)
        N = n_members
        self.x = np.repeat(f.position[None], N, axis=0)
        self.angle = np.repeat(f.angle[None], N, axis=0)
        self.v = np.repeat(f.velocity[None], N, axis=0)
        self.omega = np.repeat(f.omega[None], N, axis=0)
        self.amp = np.repeat(template.ocean.amp[None], N, axis=0)
        self.t = float(template.t)
        self.inflation = inflation or InflationNoise.off(L)
        if len(self.inflation.sigma_torque) != L:
            raise ParameterError("inflation noise size does not match the floe count")
        if streams is None:
            streams = NoiseStreams.spawn_members(seed, N)
        if len(streams) != N:
            raise ParameterError("one noise stream pair per member is required")
        self.streams = streams
        self.stats = StepStats()
        self.ncell = (_kernels.grid_cells(self.domain.side, float(self.radius.max()))
                      if self.settings.neighbor_grid and L else 0)

    @property
    def n_members(self) -> int:
        return self.x.shape[0]

    @property
    def n_floes(self) -> int:
        return self.x.shape[1]

    def member_state(self, b: int) -> SimulationState:
        fld = FloeField(self.domain, self.ids, self.radius, self.thickness, self.x[b],
                        self.angle[b], self.v[b], self.omega[b], self.is_super, self.rho_ice)
        oc = self.ocean.copy()
        oc.amp[:] = self.amp[b]
        oc.t = self.t
        return SimulationState(fld, oc, self.t)

    def set_member(self, b: int, state: SimulationState):
        self.x[b] = state.field.position
        self.angle[b] = state.field.angle
        self.v[b] = state.field.velocity
        self.omega[b] = state.field.omega
        self.amp[b] = state.ocean.amp

    def _draw(self, k: int, members):
        R = len(self.ocean.rep)
        L = self.n_floes
        infl_on = bool(self.inflation.enabled)
        oxi = np.empty((len(members), k, R, 2))
        ixi = np.zeros((len(members), k, L if infl_on else 1, 3))
        for q, b in enumerate(members):
            oxi[q] = self.streams[b].ocean.standard_normal((k, R, 2))
            if infl_on:
                ixi[q] = self.streams[b].inflation.standard_normal((k, L, 3))
        return oxi, ixi

    def _run_block(self, members, k, record, rec):
        s = self.settings
        oc = self.ocean
        oxi, ixi = self._draw(k, members)
        status = np.zeros((len(members), 4), dtype=np.int64)
        stats = np.zeros((len(members), 3), dtype=np.int64)
        X = self.x[members]
        ANG = self.angle[members]
        V = self.v[members]
        OM = self.omega[members]
        AMP = self.amp[members]
        REC = rec if record else np.zeros((len(members), 1, 1, 3))
        _kernels.advance_members(
            X, ANG, V, OM, AMP, self.t, k,
            self.radius, self.thickness, self.mass, self.inertia, self.group,
            oc.kvec, oc.eig, oc.kmax, oc.damping, oc.phase, oc.sigma, oc.partner, oc.rep,
            oc.forcing_amplitude, oc.forcing_frequency,
            self.domain.side, s.dt, oc.time_unit, self.mat.young, self.mat.shear,
            self.mat.friction, self.mat.drag if s.drag else 0.0, self.mat.rho_ocean,
            s.thickness_ref, s.substep, self.ncell, s.max_substeps,
            oxi, ixi, self.inflation.packed(), bool(self.inflation.enabled),
            REC, record, status, stats)
        self.x[members] = X
        self.angle[members] = ANG
        self.v[members] = V
        self.omega[members] = OM
        self.amp[members] = AMP
        return status, stats

    def advance(self, n_steps: int, threads: int = 1, record_cross: bool = False):
        """Advance all members ``n_steps`` steps.

        Returns the recorded large-floe loads ``(N, n_steps, L, 3)`` (force
        x, force y, torque from non-large floes) when ``record_cross``.
        """
        N, L = self.n_members, self.n_floes
        rec_all = np.zeros((N, n_steps, L, 3)) if record_cross else None
        done = 0
        while done < n_steps:
            k = min(self.settings.chunk_steps, n_steps - done)
            parts = np.array_split(np.arange(N), max(1, min(threads, N)))
            parts = [p for p in parts if len(p)]

            def work(members):
                rec = np.zeros((len(members), k, L, 3)) if record_cross else None
                st, stt = self._run_block(members, k, record_cross, rec)
                return members, st, stt, rec

            if len(parts) == 1:
                results = [work(parts[0])]
            else:
                with ThreadPoolExecutor(max_workers=len(parts)) as pool:
                    results = list(pool.map(work, parts))
            for members, st, stt, rec in results:
                for q, b in enumerate(members):
                    self.stats.add(stt[q])
                    err = _status_error(st[q], self.ids, self.t, self.settings.dt,
                                        member=int(b) if N > 1 else None)
                    if err is not None:
                        raise err
                if record_cross:
                    rec_all[members, done:done + k] = rec
            self.t += k * self.settings.dt
            done += k
            self.stats.steps += k
        self.ocean.t = self.t
        return rec_all

    def run(self, n_steps: int, record_every: int, callback: Callable[["Ensemble", int], None],
            threads: int = 1):
        """Advance in blocks, calling ``callback(self, step)`` at step 0 and
        after every ``record_every`` steps."""
        callback(self, 0)
        done = 0
        while done < n_steps:
            k = min(record_every, n_steps - done)
            self.advance(k, threads=threads)
            done += k
            if done % record_every == 0 or done == n_steps:
                callback(self, done)


def step(state: SimulationState, dt: float, mat: MaterialParams, inflation: InflationNoise | None = None,
         rng=None, settings: IntegratorSettings | None = None) -> SimulationState:
    """Advance one state by one step in place and return it.

    ``rng`` is a :class:`NoiseStreams`, a single ``Generator`` (ocean normals
    drawn first, then inflation normals) or ``None`` (no noise).
    """
    settings = settings or IntegratorSettings(dt=dt)
    if settings.dt != dt:
        settings = IntegratorSettings(**{**settings.__dict__, "dt": dt})
    if isinstance(rng, NoiseStreams):
        streams = rng
    elif rng is None:
        streams = _ZeroStreams()
    else:
        streams = NoiseStreams(rng, rng)
    ens = Ensemble(state, 1, mat, settings, inflation, streams=[streams])
    ens.advance(1)
    out = ens.member_state(0)
    state.field = out.field
    state.ocean = out.ocean
    state.t = out.t
    return state


class _ZeroGen:
    def standard_normal(self, shape):
        return np.zeros(shape)


class _ZeroStreams(NoiseStreams):
    def __init__(self):
        super().__init__(_ZeroGen(), _ZeroGen())


def run(state: SimulationState, t_final: float, record_every: int = 1,
        sink: Callable[[SimulationState], None] | None = None, mat: MaterialParams | None = None,
        settings: IntegratorSettings | None = None, inflation: InflationNoise | None = None,
        seed=None, streams: NoiseStreams | None = None, large=None, threads: int = 1):
    """Integrate to ``t_final`` and deliver snapshots to ``sink``.

    Returns the list of snapshots when ``sink`` is None.  The initial state
    is the first snapshot; with ``record_every = 1`` and ``N`` steps there are
    ``N + 1``.  The passed state is advanced in place.
    """
    mat = mat or MaterialParams()
    settings = settings or IntegratorSettings()
    if t_final < state.t:
        raise ParameterError("t_final precedes the current time")
    n_steps = int(round((t_final - state.t) / settings.dt))
    snaps = []
    deliver = sink if sink is not None else snaps.append
    if n_steps == 0:
        return snaps
    ens = Ensemble(state, 1, mat, settings, inflation,
                   streams=[streams or NoiseStreams.from_seed(seed)], large=large)
    ens.run(n_steps, record_every, lambda e, s: deliver(e.member_state(0)), threads=threads)
    final = ens.member_state(0)
    state.field, state.ocean, state.t = final.field, final.ocean, final.t
    log.debug("run: %d steps, %d sub-steps, %d retries, max n %d", n_steps,
              ens.stats.substeps, ens.stats.retries, ens.stats.max_substeps)
    return snaps
