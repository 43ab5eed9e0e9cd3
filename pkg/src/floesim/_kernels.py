"""Compiled inner loops: pair contact law, neighbor grid, ocean evaluation and
the Euler-Maruyama floe/ocean step.

Everything here works on plain arrays so the same code serves a single
simulation and a whole ensemble (leading member axis).  The Python-level API
lives in :mod:`floesim.contact`, :mod:`floesim.ocean` and
:mod:`floesim.integrator`.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# status codes written to ``status[member, 0]``
OK = 0
DEGENERATE = 1
BLOWUP = 2
TOO_STIFF = 3

# margins of the stiffness guard
PERIOD_FACTOR = 10.0     # contact oscillation period >= 10 sub-steps
RATE_LIMIT = 1.0         # damping rate * sub-step <= 1


@njit(cache=True, nogil=True)
def wrap_coord(x, side):
    y = x - side * math.floor(x / side)
    if y >= side:
        y = 0.0
    return y


@njit(cache=True, nogil=True)
def min_image(d, side):
    w = d - side * math.floor(d / side + 0.5)
    if w <= -0.5 * side:
        w += side
    return w


@njit(cache=True, nogil=True)
def chord_length(d, rl, rj):
    """Circle-circle intersection chord, clamped to ``[0, 2 min(rl, rj)]``."""
    cap = 2.0 * min(rl, rj)
    s = rl + rj
    q = rl - rj
    a = s * s - d * d
    b = d * d - q * q
    if a <= 0.0:
        return 0.0
    if b <= 0.0:
        # one disk inside the other
        return cap
    c = math.sqrt(a * b) / d
    return min(c, cap)


@njit(cache=True, nogil=True)
def pair_law(dx, dy, rl, rj, hl, hj, vlx, vly, vjx, vjy, wl, wj,
             young, shear, mu, h_ref):
    """Contact between floe l and floe j with ``(dx, dy) = x_j - x_l``.

    Returns ``(in_contact, fx, fy, ft, overlap, chord, fn_mag)`` where
    ``(fx, fy)`` is the total force on l from j and ``ft`` the signed
    tangential magnitude along ``t = z x n``.  The torque on l is
    ``rl * ft`` and on j ``rj * ft``.
    """
    d = math.sqrt(dx * dx + dy * dy)
    overlap = d - (rl + rj)
    if overlap >= 0.0:
        return False, 0.0, 0.0, 0.0, overlap, 0.0, 0.0
    nx = dx / d
    ny = dy / d
    tx = -ny
    ty = nx
    c = chord_length(d, rl, rj)
    if h_ref > 0.0:
        c = c * min(hl, hj) / h_ref
    fn = c * young * overlap  # negative: pushes l away from j
    vt = (vjx - vlx) * tx + (vjy - vly) * ty - (wl * rl + wj * rj)
    ft = c * shear * vt
    cap = mu * abs(fn)
    if abs(ft) > cap:
        ft = math.copysign(cap, ft)
    fx = fn * nx + ft * tx
    fy = fn * ny + ft * ty
    return True, fx, fy, ft, overlap, c, abs(fn)


@njit(cache=True, nogil=True)
def _pair_requirement(c, ml, mj, young, shear, dt):
    """Sub-steps needed so this contact is resolved by the explicit step."""
    if c <= 0.0:
        return 1
    m_eff = ml * mj / (ml + mj)
    k = c * young
    period = TWO_PI * math.sqrt(m_eff / k)
    n_osc = math.ceil(PERIOD_FACTOR * dt / period)
    # shear damping of the relative slip rate: 2 c G / m_eff
    rate = 2.0 * c * shear / m_eff
    n_rate = math.ceil(rate * dt / RATE_LIMIT)
    return max(1, n_osc, n_rate)


@njit(cache=True, nogil=True)
def _accumulate_pair(i, j, dx, dy, x_r, h, v, om, mass, group, young, shear, mu, h_ref,
                     dt, force, torque, cross, result):
    ok, fx, fy, ft, overlap, c, fn = pair_law(
        dx, dy, x_r[i], x_r[j], h[i], h[j], v[i, 0], v[i, 1], v[j, 0], v[j, 1],
        om[i], om[j], young, shear, mu, h_ref)
    if not ok:
        return
    force[i, 0] += fx
    force[i, 1] += fy
    force[j, 0] -= fx
    force[j, 1] -= fy
    ti = x_r[i] * ft
    tj = x_r[j] * ft
    torque[i] += ti
    torque[j] += tj
    if group[i] == 1 and group[j] == 0:
        cross[i, 0] += fx
        cross[i, 1] += fy
        cross[i, 2] += ti
    elif group[j] == 1 and group[i] == 0:
        cross[j, 0] -= fx
        cross[j, 1] -= fy
        cross[j, 2] += tj
    result[1] += 1
    if dt > 0.0:
        # account for the thickness factor through c as used in the force
        c_eff = c
        n = _pair_requirement(c_eff, mass[i], mass[j], young, shear, dt)
        if n > result[0]:
            result[0] = n


@njit(cache=True, nogil=True)
def grid_cells(side, r_max):
    """Number of cells per side of the neighbor grid (0 means all-pairs)."""
    if r_max <= 0.0:
        return 0
    n = int(math.floor(side / (2.0 * r_max)))
    if n < 3:
        return 0
    return n


@njit(cache=True, nogil=True)
def floe_loads(x, r, h, v, om, mass, group, side, young, shear, mu, h_ref, dt,
               ncell, head, nxt, force, torque, cross, result):
    """Contact forces and torques on every floe.

    ``result`` (int64[4]) receives ``[required sub-steps, contact count,
    degenerate i, degenerate j]``; ``result[2] >= 0`` flags coincident
    centers.  ``ncell == 0`` selects plain all-pairs enumeration, otherwise a
    periodic cell list of ``ncell x ncell`` cells (cell size >= 2 r_max).
    """
    n = x.shape[0]
    force[:, :] = 0.0
    torque[:] = 0.0
    cross[:, :] = 0.0
    result[0] = 1
    result[1] = 0
    result[2] = -1
    result[3] = -1
    if ncell == 0:
        for i in range(n):
            for j in range(i + 1, n):
                dx = min_image(x[j, 0] - x[i, 0], side)
                dy = min_image(x[j, 1] - x[i, 1], side)
                if dx == 0.0 and dy == 0.0:
                    result[2] = i
                    result[3] = j
                    return
                reach = r[i] + r[j]
                if dx * dx + dy * dy < reach * reach * (1.0 + 1e-12):
                    _accumulate_pair(i, j, dx, dy, r, h, v, om, mass, group, young, shear, mu,
                                     h_ref, dt, force, torque, cross, result)
        return
    cell = side / ncell
    head[:] = -1
    for i in range(n):
        cx = int(x[i, 0] / cell)
        cy = int(x[i, 1] / cell)
        if cx >= ncell:
            cx = ncell - 1
        if cy >= ncell:
            cy = ncell - 1
        c = cx * ncell + cy
        nxt[i] = head[c]
        head[c] = i
    for cx in range(ncell):
        for cy in range(ncell):
            i = head[cx * ncell + cy]
            while i >= 0:
                for ox in range(-1, 2):
                    for oy in range(-1, 2):
                        ncx = (cx + ox) % ncell
                        ncy = (cy + oy) % ncell
                        j = head[ncx * ncell + ncy]
                        while j >= 0:
                            if j > i:
                                dx = min_image(x[j, 0] - x[i, 0], side)
                                dy = min_image(x[j, 1] - x[i, 1], side)
                                if dx == 0.0 and dy == 0.0:
                                    result[2] = i
                                    result[3] = j
                                    return
                                # cheap reject; pair calls cost array refcounting
                                reach = r[i] + r[j]
                                if dx * dx + dy * dy < reach * reach * (1.0 + 1e-12):
                                    _accumulate_pair(i, j, dx, dy, r, h, v, om, mass, group,
                                                     young, shear, mu, h_ref, dt, force, torque,
                                                     cross, result)
                            j = nxt[j]
                i = nxt[i]


@njit(cache=True, nogil=True)
def candidate_pairs(x, r, side, skin, ncell, head, nxt, pairs):
    """Pairs ``i < j`` closer than ``r_i + r_j + skin``, sorted by ``(i, j)``.

    Returns ``(pairs, count, degenerate i, degenerate j)``; ``pairs`` is
    reallocated when it is too small.
    """
    n = x.shape[0]
    count = 0
    if ncell == 0:
        for i in range(n):
            for j in range(i + 1, n):
                dx = min_image(x[j, 0] - x[i, 0], side)
                dy = min_image(x[j, 1] - x[i, 1], side)
                if dx == 0.0 and dy == 0.0:
                    return pairs, 0, i, j
                reach = r[i] + r[j] + skin
                if dx * dx + dy * dy < reach * reach:
                    if count == pairs.shape[0]:
                        pairs = _grow(pairs)
                    pairs[count, 0] = i
                    pairs[count, 1] = j
                    count += 1
        return pairs, count, -1, -1
    cell = side / ncell
    head[:] = -1
    for i in range(n):
        cx = min(int(x[i, 0] / cell), ncell - 1)
        cy = min(int(x[i, 1] / cell), ncell - 1)
        c = cx * ncell + cy
        nxt[i] = head[c]
        head[c] = i
    for cx in range(ncell):
        for cy in range(ncell):
            i = head[cx * ncell + cy]
            while i >= 0:
                for ox in range(-1, 2):
                    for oy in range(-1, 2):
                        j = head[((cx + ox) % ncell) * ncell + (cy + oy) % ncell]
                        while j >= 0:
                            if j > i:
                                dx = min_image(x[j, 0] - x[i, 0], side)
                                dy = min_image(x[j, 1] - x[i, 1], side)
                                if dx == 0.0 and dy == 0.0:
                                    return pairs, 0, i, j
                                reach = r[i] + r[j] + skin
                                if dx * dx + dy * dy < reach * reach:
                                    if count == pairs.shape[0]:
                                        pairs = _grow(pairs)
                                    pairs[count, 0] = i
                                    pairs[count, 1] = j
                                    count += 1
                            j = nxt[j]
                i = nxt[i]
    keys = pairs[:count, 0] * n + pairs[:count, 1]
    order = np.argsort(keys)
    sorted_pairs = pairs[:count][order]
    pairs[:count] = sorted_pairs
    return pairs, count, -1, -1


@njit(cache=True, nogil=True)
def _grow(pairs):
    bigger = np.empty((2 * pairs.shape[0] + 16, 2), dtype=np.int64)
    bigger[:pairs.shape[0]] = pairs
    return bigger


@njit(cache=True, nogil=True)
def pair_list_loads(pairs, count, x, r, h, v, om, mass, group, side, young, shear, mu, h_ref, dt,
                    force, torque, cross, result):
    """:func:`floe_loads` restricted to the candidate ``pairs``."""
    force[:, :] = 0.0
    torque[:] = 0.0
    cross[:, :] = 0.0
    result[0] = 1
    result[1] = 0
    result[2] = -1
    result[3] = -1
    for q in range(count):
        i = pairs[q, 0]
        j = pairs[q, 1]
        dx = min_image(x[j, 0] - x[i, 0], side)
        dy = min_image(x[j, 1] - x[i, 1], side)
        if dx == 0.0 and dy == 0.0:
            result[2] = i
            result[3] = j
            return
        reach = r[i] + r[j]
        if dx * dx + dy * dy < reach * reach * (1.0 + 1e-12):
            _accumulate_pair(i, j, dx, dy, r, h, v, om, mass, group, young, shear, mu, h_ref, dt,
                             force, torque, cross, result)


@njit(cache=True, nogil=True)
def _max_displacement(x, x_ref, side):
    worst = 0.0
    for i in range(x.shape[0]):
        dx = min_image(x[i, 0] - x_ref[i, 0], side)
        dy = min_image(x[i, 1] - x_ref[i, 1], side)
        d = dx * dx + dy * dy
        if d > worst:
            worst = d
    return math.sqrt(worst)


@njit(cache=True, nogil=True)
def ocean_at(x, amp, kvec, eig, kmax, side, uo, curl, p1, p2):
    """Velocity and curl of the spectral ocean at the points ``x``.

    Sums every stored mode; with conjugate-symmetric amplitudes the
    imaginary parts cancel and only the real part is kept.
    """
    n = x.shape[0]
    nm = kvec.shape[0]
    kscale = TWO_PI / side
    for i in range(n):
        e1 = complex(math.cos(kscale * x[i, 0]), math.sin(kscale * x[i, 0]))
        e2 = complex(math.cos(kscale * x[i, 1]), math.sin(kscale * x[i, 1]))
        p1[kmax] = 1.0
        p2[kmax] = 1.0
        for q in range(1, kmax + 1):
            p1[kmax + q] = p1[kmax + q - 1] * e1
            p2[kmax + q] = p2[kmax + q - 1] * e2
            p1[kmax - q] = p1[kmax - q + 1] * e1.conjugate()
            p2[kmax - q] = p2[kmax - q + 1] * e2.conjugate()
        u1 = 0.0
        u2 = 0.0
        w = 0.0
        for m in range(nm):
            k1 = kvec[m, 0]
            k2 = kvec[m, 1]
            a = amp[m] * p1[kmax + k1] * p2[kmax + k2]
            c1 = a * eig[m, 0]
            c2 = a * eig[m, 1]
            u1 += c1.real
            u2 += c2.real
            # i * kscale * (k1 u2_hat - k2 u1_hat)
            w -= kscale * (k1 * c2.imag - k2 * c1.imag)
        uo[i, 0] = u1
        uo[i, 1] = u2
        curl[i] = w


@njit(cache=True, nogil=True)
def ocean_step(amp, damp, phase, sigma, partner, rep, f0, fw, t_model, dt_model, xi):
    """Euler-Maruyama step of the representative modes, partners conjugated."""
    sq = math.sqrt(dt_model) / math.sqrt(2.0)
    for q in range(rep.shape[0]):
        m = rep[q]
        forcing = f0[m] * complex(math.cos(fw[m] * t_model), math.sin(fw[m] * t_model))
        drift = complex(-damp[m], phase[m]) * amp[m] + forcing
        amp[m] = amp[m] + dt_model * drift + sigma[m] * sq * complex(xi[q, 0], xi[q, 1])
        p = partner[m]
        if p != m:
            amp[p] = amp[m].conjugate()


@njit(cache=True, nogil=True)
def _drag_requirement(r, mass, inertia, slip, spin_slip, drag, rho_o, dt):
    # linearised decay rates of the quadratic drag laws
    alpha = drag * rho_o * math.pi * r * r
    beta = alpha * r * r
    rate = max(2.0 * alpha * slip / mass, 2.0 * beta * spin_slip / inertia)
    return max(1, int(math.ceil(rate * dt / RATE_LIMIT)))


@njit(cache=True, nogil=True)
def advance_member(x, ang, v, om, amp, t0, n_steps,
                   r, h, mass, inertia, group,
                   kvec, eig, kmax, damp, phase, sigma, partner, rep, f0, fw,
                   side, dt, time_unit, young, shear, mu, drag, rho_o, h_ref,
                   substep, ncell, max_sub,
                   ocean_xi, infl_xi, infl_sigma, infl_on,
                   rec_cross, record, status, stats):
    """Advance one member ``n_steps`` steps in place.

    Order inside a step: contact loads, ocean at floe centers, velocity and
    spin update (contact + drag + inflation noise), position and angle
    update, ocean mode update.  When ``substep`` is set the floe subsystem
    is split into ``n`` equal sub-steps with the ocean frozen; ``n`` is the
    smallest count satisfying every contact's and drag's margin, re-checked
    at each sub-step and at the end state (the step is retried on failure).

    ``status`` = ``[code, floe index i, floe index j, step index]``;
    ``stats`` = ``[total sub-steps, retries, max n]``.
    """
    L = x.shape[0]
    force = np.zeros((L, 2))
    torque = np.zeros(L)
    cross = np.zeros((L, 3))
    cross_sum = np.zeros((L, 3))
    res = np.zeros(4, dtype=np.int64)
    head = np.empty(max(ncell * ncell, 1), dtype=np.int64)
    nxt = np.empty(L, dtype=np.int64)
    uo = np.zeros((L, 2))
    curl = np.zeros(L)
    p1 = np.empty(2 * kmax + 1, dtype=np.complex128)
    p2 = np.empty(2 * kmax + 1, dtype=np.complex128)
    xs = np.empty((L, 2))
    angs = np.empty(L)
    vs = np.empty((L, 2))
    oms = np.empty(L)
    sqdt = math.sqrt(dt)
    dt_model = dt / time_unit
    t = t0
    # sub-steps reuse a candidate pair list; rebuilt once a floe moves half the skin
    skin = 0.1 * r.min() if L > 0 else 0.0
    pairs = np.empty((8 * L + 16, 2), dtype=np.int64)
    npairs = 0
    di = -1
    dj = -1
    x_build = np.empty((L, 2))
    for s in range(n_steps):
        ocean_at(x, amp, kvec, eig, kmax, side, uo, curl, p1, p2)
        # drag margin at the start state
        n = 1
        if substep:
            for i in range(L):
                sx = uo[i, 0] - v[i, 0]
                sy = uo[i, 1] - v[i, 1]
                ss = abs(0.5 * curl[i] - om[i])
                nd = _drag_requirement(r[i], mass[i], inertia[i], math.sqrt(sx * sx + sy * sy),
                                       ss, drag, rho_o, dt)
                if nd > n:
                    n = nd
        while True:
            for i in range(L):
                xs[i, 0] = x[i, 0]
                xs[i, 1] = x[i, 1]
                angs[i] = ang[i]
                vs[i, 0] = v[i, 0]
                vs[i, 1] = v[i, 1]
                oms[i] = om[i]
            cross_sum[:, :] = 0.0
            retry = 0
            hdt = dt / n
            if substep:
                pairs, npairs, di, dj = candidate_pairs(xs, r, side, skin, ncell, head, nxt, pairs)
                x_build[:, :] = xs
            for sub in range(n):
                if substep:
                    if di < 0 and _max_displacement(xs, x_build, side) > 0.5 * skin:
                        pairs, npairs, di, dj = candidate_pairs(xs, r, side, skin, ncell, head, nxt,
                                                                pairs)
                        x_build[:, :] = xs
                    if di >= 0:
                        res[2] = di
                        res[3] = dj
                    else:
                        pair_list_loads(pairs, npairs, xs, r, h, vs, oms, mass, group, side, young,
                                        shear, mu, h_ref, dt, force, torque, cross, res)
                else:
                    floe_loads(xs, r, h, vs, oms, mass, group, side, young, shear, mu, h_ref,
                               0.0, ncell, head, nxt, force, torque, cross, res)
                if res[2] >= 0:
                    status[0] = DEGENERATE
                    status[1] = res[2]
                    status[2] = res[3]
                    status[3] = s
                    return t
                if substep and res[0] > n:
                    retry = res[0]
                    break
                for i in range(L):
                    sx = uo[i, 0] - vs[i, 0]
                    sy = uo[i, 1] - vs[i, 1]
                    slip = math.sqrt(sx * sx + sy * sy)
                    alpha = drag * rho_o * math.pi * r[i] * r[i]
                    ds = 0.5 * curl[i] - oms[i]
                    beta = alpha * r[i] * r[i]
                    if substep:
                        nd = _drag_requirement(r[i], mass[i], inertia[i], slip, abs(ds),
                                               drag, rho_o, dt)
                        if nd > n and nd > retry:
                            retry = nd
                    fx = force[i, 0] + alpha * sx * slip
                    fy = force[i, 1] + alpha * sy * slip
                    tq = torque[i] + beta * ds * abs(ds)
                    vs[i, 0] += hdt * fx / mass[i]
                    vs[i, 1] += hdt * fy / mass[i]
                    oms[i] += hdt * tq / inertia[i]
                    if infl_on:
                        vs[i, 0] += infl_sigma[i, 0] * sqdt * infl_xi[s, i, 0] / mass[i] / n
                        vs[i, 1] += infl_sigma[i, 1] * sqdt * infl_xi[s, i, 1] / mass[i] / n
                        oms[i] += infl_sigma[i, 2] * sqdt * infl_xi[s, i, 2] / inertia[i] / n
                    xs[i, 0] = wrap_coord(xs[i, 0] + hdt * vs[i, 0], side)
                    xs[i, 1] = wrap_coord(xs[i, 1] + hdt * vs[i, 1], side)
                    angs[i] = wrap_coord(angs[i] + hdt * oms[i], TWO_PI)
                if retry > 0:
                    break
                for i in range(L):
                    cross_sum[i, 0] += cross[i, 0]
                    cross_sum[i, 1] += cross[i, 1]
                    cross_sum[i, 2] += cross[i, 2]
            if retry == 0 and substep:
                # contacts that appeared during the step must also be resolved
                if _max_displacement(xs, x_build, side) > 0.5 * skin:
                    floe_loads(xs, r, h, vs, oms, mass, group, side, young, shear, mu, h_ref,
                               dt, ncell, head, nxt, force, torque, cross, res)
                else:
                    pair_list_loads(pairs, npairs, xs, r, h, vs, oms, mass, group, side, young,
                                    shear, mu, h_ref, dt, force, torque, cross, res)
                if res[0] > n:
                    retry = res[0]
            if retry == 0:
                break
            stats[1] += 1
            if retry > max_sub:
                status[0] = TOO_STIFF
                status[1] = -1
                status[2] = retry
                status[3] = s
                return t
            # deepening contacts raise the requirement again, so grow at least geometrically
            n = min(max(retry, 2 * n), max_sub)
        stats[0] += n
        if n > stats[2]:
            stats[2] = n
        for i in range(L):
            x[i, 0] = xs[i, 0]
            x[i, 1] = xs[i, 1]
            ang[i] = angs[i]
            v[i, 0] = vs[i, 0]
            v[i, 1] = vs[i, 1]
            om[i] = oms[i]
        if record:
            for i in range(L):
                rec_cross[s, i, 0] = cross_sum[i, 0] / n
                rec_cross[s, i, 1] = cross_sum[i, 1] / n
                rec_cross[s, i, 2] = cross_sum[i, 2] / n
        ocean_step(amp, damp, phase, sigma, partner, rep, f0, fw, t / time_unit, dt_model,
                   ocean_xi[s])
        t = t0 + (s + 1) * dt
        for i in range(L):
            if not (math.isfinite(x[i, 0]) and math.isfinite(x[i, 1]) and math.isfinite(v[i, 0])
                    and math.isfinite(v[i, 1]) and math.isfinite(om[i]) and math.isfinite(ang[i])):
                status[0] = BLOWUP
                status[1] = i
                status[2] = -1
                status[3] = s
                return t
        for m in range(amp.shape[0]):
            if not (math.isfinite(amp[m].real) and math.isfinite(amp[m].imag)):
                status[0] = BLOWUP
                status[1] = -1
                status[2] = m
                status[3] = s
                return t
    return t


@njit(cache=True, nogil=True)
def advance_members(X, ANG, V, OM, AMP, t0, n_steps,
                    r, h, mass, inertia, group,
                    kvec, eig, kmax, damp, phase, sigma, partner, rep, f0, fw,
                    side, dt, time_unit, young, shear, mu, drag, rho_o, h_ref,
                    substep, ncell, max_sub,
                    OCEAN_XI, INFL_XI, infl_sigma, infl_on,
                    REC, record, STATUS, STATS):
    for b in range(X.shape[0]):
        advance_member(X[b], ANG[b], V[b], OM[b], AMP[b], t0, n_steps,
                       r, h, mass, inertia, group,
                       kvec, eig, kmax, damp, phase, sigma, partner, rep, f0, fw,
                       side, dt, time_unit, young, shear, mu, drag, rho_o, h_ref,
                       substep, ncell, max_sub,
                       OCEAN_XI[b], INFL_XI[b], infl_sigma, infl_on,
                       REC[b], record, STATUS[b], STATS[b])
        if STATUS[b, 0] != OK:
            return


@njit(cache=True, nogil=True)
def ocean_run(amp, damp, phase, sigma, partner, rep, f0, fw, t_model, dt_model, xi, trace, every):
    """``xi.shape[0]`` ocean steps; ``trace[s // every] = amp`` when ``s % every == 0``
    (recorded after the step).  Returns the final model time."""
    t = t_model
    for s in range(xi.shape[0]):
        ocean_step(amp, damp, phase, sigma, partner, rep, f0, fw, t, dt_model, xi[s])
        t = t_model + (s + 1) * dt_model
        if trace.shape[0] > 0 and s % every == 0:
            q = s // every
            for m in range(amp.shape[0]):
                trace[q, m] = amp[m]
    return t
