"""Floe geometry, statistical floe populations and derived physical properties.

All quantities are SI (m, s, kg, rad).  A floe is a cylinder of radius ``r``
and thickness ``h``; its mass is ``rho_ice * pi * r**2 * h`` and its moment of
inertia is ``mass * r**2``.

Floe ids are assigned after sorting by descending radius, so id 1 is the
largest floe and the first ``L0`` ids are the ``L0`` largest floes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ParameterError

ORDINARY = "ordinary"
SUPER = "super"

MAX_CONCENTRATION = 0.85
RELAX_SWEEPS = 50


@dataclass(frozen=True)
class Domain:
    """Doubly periodic square domain ``[0, side)^2``."""

    side: float = 50_000.0
    periodic: bool = field(default=True, init=False)

    def __post_init__(self):
        if not (math.isfinite(self.side) and self.side > 0):
            raise ParameterError(f"domain side must be positive, got {self.side}")

    @property
    def area(self) -> float:
        return self.side * self.side

    def wrap(self, x):
        """Map coordinates into ``[0, side)``."""
        y = np.mod(x, self.side)
        # np.mod(-tiny, side) rounds to side itself
        return np.where(y >= self.side, 0.0, y)


@dataclass(frozen=True)
class MaterialParams:
    rho_ice: float = 900.0
    young: float = 1.25e8
    shear: float = 1.25e8
    friction: float = 0.2
    drag: float = 3e-3
    rho_ocean: float = 1000.0

    def __post_init__(self):
        for name in ("rho_ice", "young", "shear", "friction", "drag", "rho_ocean"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"material parameter {name} must be > 0, got {value}")


@dataclass(frozen=True)
class SizeDistribution:
    """Power law ``p(r) = a kappa^a / r^(a+1)`` for ``r >= kappa``."""

    exponent: float = 1.0
    scale: float = 1500.0

    def __post_init__(self):
        if not (math.isfinite(self.exponent) and self.exponent > 0):
            raise ParameterError(f"size exponent must be > 0, got {self.exponent}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ParameterError(f"size scale must be > 0, got {self.scale}")

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        a, k = self.exponent, self.scale
        return np.where(r >= k, a * k**a / np.maximum(r, k) ** (a + 1), 0.0)

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= self.scale, 1.0 - (self.scale / np.maximum(r, self.scale)) ** self.exponent, 0.0)


@dataclass(frozen=True)
class ThicknessDistribution:
    """Gamma law with shape ``k`` and scale ``theta`` (m)."""

    shape: float = 2.0
    scale: float = 1.3

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ParameterError(f"thickness shape must be > 0, got {self.shape}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ParameterError(f"thickness scale must be > 0, got {self.scale}")

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        k, th = self.shape, self.scale
        out = np.zeros_like(h)
        pos = h > 0
        out[pos] = h[pos] ** (k - 1) * np.exp(-h[pos] / th) / (math.gamma(k) * th**k)
        return out


# Table 2 of the model description: typical ranges used as rejection caps.
RADIUS_CAPS = (1_000.0, 10_000.0)
THICKNESS_CAPS = (0.1, 3.5)


@dataclass
class Floe:
    id: int
    r: float
    h: float
    x: tuple = (0.0, 0.0)
    angle: float = 0.0
    v: tuple = (0.0, 0.0)
    omega: float = 0.0
    kind: str = ORDINARY

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ParameterError(f"floe {self.id}: radius must be > 0, got {self.r}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise ParameterError(f"floe {self.id}: thickness must be > 0, got {self.h}")
        if self.kind not in (ORDINARY, SUPER):
            raise ParameterError(f"floe {self.id}: unknown kind {self.kind!r}")
        self.x = (float(self.x[0]), float(self.x[1]))
        self.v = (float(self.v[0]), float(self.v[1]))

    def mass(self, rho_ice: float = 900.0) -> float:
        return rho_ice * math.pi * self.r**2 * self.h

    def inertia(self, rho_ice: float = 900.0) -> float:
        return self.mass(rho_ice) * self.r**2


def derived_properties(floe: Floe, mat: MaterialParams) -> tuple[float, float]:
    """Return ``(mass, moment of inertia)`` of a floe."""
    m = mat.rho_ice * math.pi * floe.r**2 * floe.h
    return m, m * floe.r**2


class FloeField:
    """Collection of floes on a periodic domain, stored as parallel arrays.

    ``position`` and ``velocity`` have shape ``(L, 2)``; the other per-floe
    arrays have shape ``(L,)``.
    """

    def __init__(self, domain, ids, radius, thickness, position, angle=None,
                 velocity=None, omega=None, is_super=None, rho_ice=900.0):
        self.domain = domain
        n = len(radius)
        self.ids = np.asarray(ids, dtype=np.int64).reshape(n)
        self.radius = np.asarray(radius, dtype=float).reshape(n).copy()
        self.thickness = np.asarray(thickness, dtype=float).reshape(n).copy()
        self.position = np.asarray(position, dtype=float).reshape(n, 2).copy()
        self.angle = np.zeros(n) if angle is None else np.asarray(angle, dtype=float).reshape(n).copy()
        self.velocity = np.zeros((n, 2)) if velocity is None else np.asarray(velocity, dtype=float).reshape(n, 2).copy()
        self.omega = np.zeros(n) if omega is None else np.asarray(omega, dtype=float).reshape(n).copy()
        self.is_super = np.zeros(n, dtype=bool) if is_super is None else np.asarray(is_super, dtype=bool).reshape(n).copy()
        self.rho_ice = float(rho_ice)
        self.validate()

    def validate(self):
        if np.any(~np.isfinite(self.radius)) or np.any(self.radius <= 0):
            raise ParameterError("all floe radii must be finite and > 0")
        if np.any(~np.isfinite(self.thickness)) or np.any(self.thickness <= 0):
            raise ParameterError("all floe thicknesses must be finite and > 0")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ParameterError("floe ids must be unique")
        side = self.domain.side
        if np.any(self.position < 0) or np.any(self.position >= side):
            raise ParameterError("floe positions must lie in [0, side)")

    def __len__(self):
        return len(self.radius)

    @property
    def mass(self) -> np.ndarray:
        return self.rho_ice * np.pi * self.radius**2 * self.thickness

    @property
    def inertia(self) -> np.ndarray:
        return self.mass * self.radius**2

    def copy(self) -> "FloeField":
        return FloeField(self.domain, self.ids, self.radius, self.thickness, self.position,
                         self.angle, self.velocity, self.omega, self.is_super, self.rho_ice)

    def floe(self, i: int) -> Floe:
        return Floe(
            id=int(self.ids[i]), r=float(self.radius[i]), h=float(self.thickness[i]),
            x=tuple(self.position[i]), angle=float(self.angle[i]), v=tuple(self.velocity[i]),
            omega=float(self.omega[i]), kind=SUPER if self.is_super[i] else ORDINARY,
        )

    def floes(self) -> list[Floe]:
        return [self.floe(i) for i in range(len(self))]

    def index_of(self, floe_id: int) -> int:
        hits = np.flatnonzero(self.ids == floe_id)
        if len(hits) == 0:
            raise KeyError(floe_id)
        return int(hits[0])

    def subset(self, indices) -> "FloeField":
        idx = np.asarray(indices, dtype=np.int64)
        return FloeField(self.domain, self.ids[idx], self.radius[idx], self.thickness[idx],
                         self.position[idx], self.angle[idx], self.velocity[idx],
                         self.omega[idx], self.is_super[idx], self.rho_ice)

    @classmethod
    def from_floes(cls, floes: Sequence[Floe], domain: Domain, rho_ice: float = 900.0) -> "FloeField":
        if len(floes) == 0:
            return cls(domain, np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0),
                       np.zeros((0, 2)), rho_ice=rho_ice)
        return cls(
            domain,
            [f.id for f in floes], [f.r for f in floes], [f.h for f in floes],
            [f.x for f in floes], [f.angle for f in floes], [f.v for f in floes],
            [f.omega for f in floes], [f.kind == SUPER for f in floes], rho_ice,
        )

    def sorted_by_radius(self) -> "FloeField":
        """Descending radius, ties broken by lower id."""
        order = np.lexsort((self.ids, -self.radius))
        return self.subset(order)

    def __repr__(self):
        return f"FloeField(L={len(self)}, side={self.domain.side:g} m, c={concentration(self):.3f})"


def _check_caps(caps, name):
    if caps is None:
        return None
    lo, hi = float(caps[0]), float(caps[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi <= lo:
        raise ParameterError(f"invalid {name} caps {caps}")
    return lo, hi


def _inverse_size_cdf(u, dist: SizeDistribution):
    return dist.scale * (1.0 - u) ** (-1.0 / dist.exponent)


def sample_radius(u: float, dist: SizeDistribution, caps=None, rng=None) -> float:
    """Inverse-CDF radius sample ``kappa * (1 - u)^(-1/a)``.

    Samples falling outside ``caps`` are rejected and redrawn from ``rng``.
    """
    if not math.isfinite(u) or not (0.0 <= u < 1.0):
        raise ParameterError(f"uniform deviate must lie in [0, 1), got {u}")
    caps = _check_caps(caps, "radius")
    if caps is not None and caps[1] < dist.scale:
        raise ParameterError(f"radius caps {caps} exclude the whole support r >= {dist.scale}")
    r = float(_inverse_size_cdf(u, dist))
    while caps is not None and not (caps[0] <= r <= caps[1]):
        if rng is None:
            raise ParameterError("radius outside caps and no rng given for resampling")
        r = float(_inverse_size_cdf(rng.random(), dist))
    return r


def sample_radii(rng, n: int, dist: SizeDistribution, caps=RADIUS_CAPS) -> np.ndarray:
    caps = _check_caps(caps, "radius")
    if caps is not None and caps[1] < dist.scale:
        raise ParameterError(f"radius caps {caps} exclude the whole support r >= {dist.scale}")
    out = np.empty(0)
    while len(out) < n:
        r = _inverse_size_cdf(rng.random(max(n - len(out), 16)), dist)
        if caps is not None:
            r = r[(r >= caps[0]) & (r <= caps[1])]
        out = np.concatenate([out, r])
    return out[:n]


def sample_thickness(rng, dist: ThicknessDistribution, caps=THICKNESS_CAPS, size=None):
    """Gamma(shape, scale) variates, redrawn until inside ``caps``."""
    caps = _check_caps(caps, "thickness")
    n = 1 if size is None else int(size)
    out = np.empty(0)
    while len(out) < n:
        h = rng.gamma(dist.shape, dist.scale, size=max(n - len(out), 16))
        if caps is not None:
            h = h[(h >= caps[0]) & (h <= caps[1])]
        out = np.concatenate([out, h])
    out = out[:n]
    return float(out[0]) if size is None else out


def minimum_image(d, side):
    """Wrap displacement components into ``(-side/2, side/2]``."""
    d = np.asarray(d, dtype=float)
    w = d - side * np.floor(d / side + 0.5)
    # floor(...+0.5) maps +side/2 to -side/2; keep the half-open convention
    return np.where(w <= -0.5 * side, w + side, w)


def relax_overlaps(position, radius, side, sweeps=RELAX_SWEEPS, factor=0.8, clearance=1e-3):
    """Jacobi push-apart sweeps along the minimum-image normal.

    Each overlapping pair is separated in proportion to the other floe's
    area, so large floes move less.  Pairs are pushed toward a separation of
    ``(1 + clearance) (r_i + r_j)``.  Residual overlaps are allowed.
    """
    pos = np.array(position, dtype=float)
    n = len(radius)
    if n < 2:
        return pos
    r = np.asarray(radius, dtype=float)
    area = r**2
    reach = (1.0 + clearance) * (r[:, None] + r[None, :])
    w = area[None, :] / (area[:, None] + area[None, :])
    fallback = np.stack([np.cos(2.399963 * np.arange(n)), np.sin(2.399963 * np.arange(n))], axis=1)
    for _ in range(sweeps):
        disp = minimum_image(pos[None, :, :] - pos[:, None, :], side)
        d = np.hypot(disp[..., 0], disp[..., 1])
        overlap = reach - d
        np.fill_diagonal(overlap, 0.0)
        hit = overlap > 0
        if not hit.any():
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            normal = disp / d[..., None]
        coincide = hit & (d == 0)
        if coincide.any():
            ii, jj = np.nonzero(coincide)
            normal[ii, jj] = np.where((ii < jj)[:, None], fallback[ii], -fallback[jj])
        push = np.where(hit, factor * w * overlap, 0.0)
        pos = pos - np.einsum("ij,ijk->ik", push, np.nan_to_num(normal))
        pos = np.mod(pos, side)
        pos[pos >= side] = 0.0
    return pos


def initialize_field(n_floes: int, domain: Domain = Domain(), size_dist: SizeDistribution = SizeDistribution(),
                     thickness_dist: ThicknessDistribution = ThicknessDistribution(), seed=0,
                     radius_caps=RADIUS_CAPS, thickness_caps=THICKNESS_CAPS, rho_ice: float = 900.0,
                     sweeps: int = RELAX_SWEEPS) -> FloeField:
    """Sample a floe population, place it uniformly and relax overlaps.

    Floes are at rest.  The result is a deterministic function of ``seed``.
    """
    if n_floes < 1:
        raise ConfigurationError(f"need at least one floe, got {n_floes}")
    rng = np.random.default_rng(seed)
    radius = np.sort(sample_radii(rng, n_floes, size_dist, radius_caps))[::-1]
    thickness = sample_thickness(rng, thickness_dist, thickness_caps, size=n_floes)
    c = float(np.sum(np.pi * radius**2) / domain.area)
    if c > MAX_CONCENTRATION:
        raise ConfigurationError(
            f"sampled concentration {c:.2f} exceeds {MAX_CONCENTRATION}; "
            f"reduce the floe count or the radius caps")
    position = rng.random((n_floes, 2)) * domain.side
    position = relax_overlaps(position, radius, domain.side, sweeps=sweeps)
    return FloeField(domain, np.arange(1, n_floes + 1), radius, thickness, position, rho_ice=rho_ice)


def benchmark_population(n_floes: int) -> tuple[SizeDistribution, tuple[float, float]]:
    """Radius law and caps for the reduction benchmark populations.

    The default caps over-fill the 50 km domain once ``n_floes >= 100``;
    these narrower populations give concentrations of roughly 0.35 (40
    floes) to 0.78 (200 floes) with the largest radii near 4 km.
    """
    if n_floes <= 100:
        return SizeDistribution(1.0, 1500.0), (1000.0, 4000.0)
    return SizeDistribution(1.0, 800.0), (500.0, 3900.0)


def benchmark_field(n_floes: int, seed=0, domain: Domain = Domain(), rho_ice: float = 900.0) -> FloeField:
    size, caps = benchmark_population(n_floes)
    return initialize_field(n_floes, domain, size, ThicknessDistribution(), seed=seed,
                            radius_caps=caps, rho_ice=rho_ice)


def concentration(field: FloeField) -> float:
    """Fraction of the domain covered by floes (overlaps counted twice)."""
    if len(field) == 0:
        return 0.0
    return float(np.sum(np.pi * field.radius**2) / field.domain.area)


def field_statistics(field: FloeField) -> dict:
    """Table-1 style summary: concentration, radius and thickness extremes."""
    if len(field) == 0:
        return {"n": 0, "c": 0.0, "r_min": math.nan, "r_max": math.nan, "h_min": math.nan, "h_max": math.nan}
    return {
        "n": len(field),
        "c": concentration(field),
        "r_min": float(field.radius.min()),
        "r_max": float(field.radius.max()),
        "h_min": float(field.thickness.min()),
        "h_max": float(field.thickness.max()),
    }
