"""Pairwise floe contact: Hooke normal force, shear tangential force with a
Coulomb cap, and the resulting torques, on a doubly periodic domain.

Sign conventions: ``n`` points from floe l's center toward floe j's center,
``t`` is ``n`` rotated 90 degrees counterclockwise, and the overlap
``delta = d - (r_l + r_j)`` is negative in contact, so ``c E delta n`` pushes
l away from j.  Every function returns the load ON floe l FROM floe j.

:func:`accumulate_loads` has two routes: a compiled neighbor-grid path used
by the integrator, and a plain O(L^2) loop over :func:`detect_contact` and
friends that serves as the reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateContactError
from .floes import Domain, Floe, FloeField, MaterialParams, minimum_image


@dataclass(frozen=True)
class ContactPair:
    l: int
    j: int
    separation: float
    overlap: float
    normal: np.ndarray
    tangent: np.ndarray
    chord: float
    slip: float
    radius_l: float
    radius_j: float
    thickness_factor: float = 1.0


@dataclass
class BodyLoads:
    """Per-floe contact force ``(L, 2)`` and torque ``(L,)`` accumulators."""

    force: np.ndarray
    torque: np.ndarray
    pairs: np.ndarray  # (n_contacts, 2) floe indices, l < j
    pair_count: int = -1  # pairs the load loop itself evaluated

    @property
    def n_contacts(self) -> int:
        return len(self.pairs)


def minimum_image_displacement(x_l, x_j, domain: Domain) -> np.ndarray:
    """``x_j - x_l`` wrapped component-wise into ``(-side/2, side/2]``."""
    d = np.asarray(x_j, dtype=float) - np.asarray(x_l, dtype=float)
    return minimum_image(d, domain.side)


def chord_length(d: float, r_l: float, r_j: float) -> float:
    """Chord of the circle-circle intersection, clamped to ``[0, 2 min(r)]``.

    Uses ``c d = sqrt(((r_l + r_j)^2 - d^2) (d^2 - (r_l - r_j)^2))``, which is
    the same as ``sqrt(4 d^2 r_l^2 - (d^2 - r_j^2 + r_l^2)^2)`` but symmetric
    in l and j.
    """
    cap = 2.0 * min(r_l, r_j)
    a = (r_l + r_j) ** 2 - d * d
    b = d * d - (r_l - r_j) ** 2
    if a <= 0:
        return 0.0
    if b <= 0:
        return cap
    return min(math.sqrt(a * b) / d, cap)


def detect_contact(floe_l: Floe, floe_j: Floe, domain: Domain, h_ref: float = 0.0):
    """Return a :class:`ContactPair` if the floes overlap, else ``None``.

    Touching (``delta == 0``) is not contact.  ``h_ref > 0`` enables the
    optional thickness scaling ``min(h_l, h_j) / h_ref`` of the contact chord.
    """
    dx, dy = minimum_image_displacement(floe_l.x, floe_j.x, domain)
    if dx == 0.0 and dy == 0.0:
        raise DegenerateContactError(floe_l.id, floe_j.id)
    d = math.sqrt(dx * dx + dy * dy)
    overlap = d - (floe_l.r + floe_j.r)
    if overlap >= 0.0:
        return None
    n = np.array([dx / d, dy / d])
    t = np.array([-n[1], n[0]])
    factor = min(floe_l.h, floe_j.h) / h_ref if h_ref > 0 else 1.0
    return ContactPair(
        l=floe_l.id, j=floe_j.id, separation=d, overlap=overlap, normal=n, tangent=t,
        chord=chord_length(d, floe_l.r, floe_j.r), slip=_slip(n, t, floe_l, floe_j),
        radius_l=floe_l.r, radius_j=floe_j.r, thickness_factor=factor,
    )


def _slip(n, t, floe_l: Floe, floe_j: Floe) -> float:
    # contact-point velocities: r_l = r^l n and r^j = -r^j n, z x n = t
    rel = (floe_j.v[0] - floe_l.v[0]) * t[0] + (floe_j.v[1] - floe_l.v[1]) * t[1]
    return rel - (floe_l.omega * floe_l.r + floe_j.omega * floe_j.r)


def normal_force(pair: ContactPair, mat: MaterialParams) -> np.ndarray:
    """Hooke law ``c E delta n`` (on l from j)."""
    c = pair.chord * pair.thickness_factor
    return c * mat.young * pair.overlap * pair.normal


def tangential_force(pair: ContactPair, floe_l: Floe, floe_j: Floe, mat: MaterialParams) -> np.ndarray:
    """Shear law ``c G v_t t`` with magnitude capped at ``mu |f_n|``."""
    c = pair.chord * pair.thickness_factor
    vt = _slip(pair.normal, pair.tangent, floe_l, floe_j)
    ft = c * mat.shear * vt
    cap = mat.friction * abs(c * mat.young * pair.overlap)
    if abs(ft) > cap:
        ft = math.copysign(cap, ft)
    return ft * pair.tangent


def cap_tangential(raw: np.ndarray, normal: np.ndarray, mu: float) -> np.ndarray:
    """Clamp ``|raw|`` to ``mu |normal|`` keeping its direction."""
    raw = np.asarray(raw, dtype=float)
    mag = float(np.hypot(*raw))
    cap = mu * float(np.hypot(*normal))
    if mag > cap and mag > 0:
        return raw * (cap / mag)
    return raw


def contact_torque(pair: ContactPair, f_t) -> float:
    """``(r_l n x f_t) . z`` on floe l."""
    n = pair.normal
    return pair.radius_l * (n[0] * f_t[1] - n[1] * f_t[0])


def accumulate_loads(field: FloeField, mat: MaterialParams, method: str = "grid",
                     h_ref: float = 0.0) -> BodyLoads:
    """Sum pairwise contact loads over the field.

    ``method="grid"`` uses the compiled cell list (falls back to all pairs
    when fewer than three cells fit); ``"allpairs"`` the compiled O(L^2)
    loop; ``"oracle"`` a pure-Python O(L^2) loop over :func:`detect_contact`,
    :func:`normal_force`, :func:`tangential_force` and :func:`contact_torque`.
    """
    if method == "oracle":
        return _oracle_loads(field, mat, h_ref)
    if method not in ("grid", "allpairs"):
        raise ValueError(f"unknown method {method!r}")
    L = len(field)
    force = np.zeros((L, 2))
    torque = np.zeros(L)
    if L < 2:
        return BodyLoads(force, torque, np.zeros((0, 2), dtype=np.int64), 0)
    ncell = _kernels.grid_cells(field.domain.side, float(field.radius.max())) if method == "grid" else 0
    res = np.zeros(4, dtype=np.int64)
    cross = np.zeros((L, 3))
    _kernels.floe_loads(
        field.position, field.radius, field.thickness, field.velocity, field.omega,
        field.mass, np.zeros(L, dtype=np.int8), field.domain.side, mat.young, mat.shear,
        mat.friction, h_ref, 0.0, ncell, np.empty(max(ncell * ncell, 1), dtype=np.int64),
        np.empty(L, dtype=np.int64), force, torque, cross, res)
    if res[2] >= 0:
        raise DegenerateContactError(field.ids[res[2]], field.ids[res[3]])
    return BodyLoads(force, torque, contact_pairs(field), int(res[1]))


def contact_pairs(field: FloeField) -> np.ndarray:
    """Index pairs ``(l, j)``, ``l < j``, of overlapping floes (vectorised)."""
    L = len(field)
    if L < 2:
        return np.zeros((0, 2), dtype=np.int64)
    il, jl = np.triu_indices(L, k=1)
    disp = minimum_image(field.position[jl] - field.position[il], field.domain.side)
    d = np.hypot(disp[:, 0], disp[:, 1])
    hit = d - (field.radius[il] + field.radius[jl]) < 0
    return np.stack([il[hit], jl[hit]], axis=1).astype(np.int64)


def _oracle_loads(field: FloeField, mat: MaterialParams, h_ref: float) -> BodyLoads:
    L = len(field)
    floes = field.floes()
    force = np.zeros((L, 2))
    torque = np.zeros(L)
    pairs = []
    for a in range(L):
        for b in range(a + 1, L):
            pair = detect_contact(floes[a], floes[b], field.domain, h_ref=h_ref)
            if pair is None:
                continue
            ft = tangential_force(pair, floes[a], floes[b], mat)
            f = normal_force(pair, mat) + ft
            force[a] += f
            force[b] -= f
            torque[a] += contact_torque(pair, ft)
            # torque on j from l: (r_j n^{jl} x f_t^{jl}) with n^{jl} = -n, f_t^{jl} = -f_t
            torque[b] += pair.radius_j * (pair.normal[0] * ft[1] - pair.normal[1] * ft[0])
            pairs.append((a, b))
    return BodyLoads(force, torque, np.array(pairs, dtype=np.int64).reshape(-1, 2), len(pairs))
