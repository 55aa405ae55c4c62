"""Numba kernels for the particle solver.

Everything here is deliberately scalar and sequential: constraints are
processed in fixed index order so repeated runs are bit-identical. The
Python-facing API lives in ``solver.py`` / ``geometry.py``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Shape codes shared with geometry.py
SHAPE_PLANE = 0
SHAPE_CYLINDER = 1
SHAPE_OPEN_BOX = 2
SHAPE_FUNNEL = 3

# cdata layout: [0:3] origin, [3:12] rotation rows, [12:17] dims,
# [17] gate_open, [18] friction_scale, [19] adhesion_scale
CDATA_WIDTH = 20

# particle clouds live in desk-scale scenes; a grid bigger than this
# means coordinates have already blown up
_MAX_GRID_CELLS = 8_000_000

# home cell plus the 13 forward neighbors of a symmetric 27-stencil
_STENCIL = np.array(
    [[0, 0, 0], [1, 0, 0], [-1, 1, 0], [0, 1, 0], [1, 1, 0]]
    + [[dx, dy, 1] for dy in (-1, 0, 1) for dx in (-1, 0, 1)],
    dtype=np.int64)


# ---------------------------------------------------------------------------
# signed-distance primitives (local frame, +z up)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _box_sdf(px, py, pz, bx, by, bz):
    """Solid box centered at origin with half extents (bx, by, bz)."""
    qx = abs(px) - bx
    qy = abs(py) - by
    qz = abs(pz) - bz
    ox = qx if qx > 0.0 else 0.0
    oy = qy if qy > 0.0 else 0.0
    oz = qz if qz > 0.0 else 0.0
    d_out = math.sqrt(ox * ox + oy * oy + oz * oz)
    if d_out > 1e-300:
        sx = 1.0 if px >= 0.0 else -1.0
        sy = 1.0 if py >= 0.0 else -1.0
        sz = 1.0 if pz >= 0.0 else -1.0
        return d_out, sx * ox / d_out, sy * oy / d_out, sz * oz / d_out
    # inside: closest face along the largest (least negative) component
    m = qx
    axis = 0
    if qy > m:
        m = qy
        axis = 1
    if qz > m:
        m = qz
        axis = 2
    if axis == 0:
        return m, (1.0 if px >= 0.0 else -1.0), 0.0, 0.0
    if axis == 1:
        return m, 0.0, (1.0 if py >= 0.0 else -1.0), 0.0
    return m, 0.0, 0.0, (1.0 if pz >= 0.0 else -1.0)


@njit(cache=True)
def _cylinder_sdf(px, py, pz, r, hh):
    """Solid capped cylinder, axis +z, radius r, half height hh."""
    rho = math.sqrt(px * px + py * py)
    if rho > 1e-300:
        ux, uy = px / rho, py / rho
    else:
        ux, uy = 1.0, 0.0
    dr = rho - r
    dz = abs(pz) - hh
    sz = 1.0 if pz >= 0.0 else -1.0
    if dr > 0.0 and dz > 0.0:
        d = math.sqrt(dr * dr + dz * dz)
        return d, ux * dr / d, uy * dr / d, sz * dz / d
    if dr > dz:
        return dr, ux, uy, 0.0
    return dz, 0.0, 0.0, sz


@njit(cache=True)
def _profile_segment(rho, z, ax, az, bx, bz):
    """Distance and direction from (rho, z) to segment a-b in profile space."""
    dx = bx - ax
    dz = bz - az
    denom = dx * dx + dz * dz
    t = ((rho - ax) * dx + (z - az) * dz) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cx = ax + t * dx
    cz = az + t * dz
    ex = rho - cx
    ez = z - cz
    d = math.sqrt(ex * ex + ez * ez)
    if d > 1e-300:
        return d, ex / d, ez / d
    # on the segment: fall back to the profile normal of the segment
    seg = math.sqrt(denom)
    return 0.0, dz / seg, -dx / seg


@njit(cache=True)
def _open_box_sdf(px, py, pz, hx, hy, wall_h, t, lip_h):
    """Open-top box: bottom slab plus four walls; +x wall is a lower lip.

    Interior bottom plane sits at z = 0; interior spans |x| < hx, |y| < hy.
    """
    best = 1e30
    nx = ny = 0.0
    nz = 1.0
    # bottom slab
    d, ax, ay, az = _box_sdf(px, py, pz + 0.5 * t, hx + t, hy + t, 0.5 * t)
    if d < best:
        best, nx, ny, nz = d, ax, ay, az
    # +x wall (pour lip, height lip_h)
    d, ax, ay, az = _box_sdf(px - (hx + 0.5 * t), py, pz - 0.5 * lip_h,
                             0.5 * t, hy + t, 0.5 * lip_h)
    if d < best:
        best, nx, ny, nz = d, ax, ay, az
    # -x wall
    d, ax, ay, az = _box_sdf(px + (hx + 0.5 * t), py, pz - 0.5 * wall_h,
                             0.5 * t, hy + t, 0.5 * wall_h)
    if d < best:
        best, nx, ny, nz = d, ax, ay, az
    # +y / -y walls
    d, ax, ay, az = _box_sdf(px, py - (hy + 0.5 * t), pz - 0.5 * wall_h,
                             hx + t, 0.5 * t, 0.5 * wall_h)
    if d < best:
        best, nx, ny, nz = d, ax, ay, az
    d, ax, ay, az = _box_sdf(px, py + (hy + 0.5 * t), pz - 0.5 * wall_h,
                             hx + t, 0.5 * t, 0.5 * wall_h)
    if d < best:
        best, nx, ny, nz = d, ax, ay, az
    return best, nx, ny, nz


@njit(cache=True)
def _funnel_sdf(px, py, pz, r_exit, r_top, height, t, gate_open):
    """Truncated-cone shell opening upward; exit plane at z = 0.

    A closed gate adds a disc shell flush with the exit plane.
    """
    rho = math.sqrt(px * px + py * py)
    if rho > 1e-300:
        ux, uy = px / rho, py / rho
    else:
        ux, uy = 1.0, 0.0
    d, er, ez = _profile_segment(rho, pz, r_exit, 0.0, r_top, height)
    best = d - 0.5 * t
    nx, ny, nz = ux * er, uy * er, ez
    if gate_open < 0.5:
        dg, gr, gz = _profile_segment(rho, pz, 0.0, 0.0, r_exit + t, 0.0)
        sg = dg - 0.5 * t
        if sg < best:
            best = sg
            nx, ny, nz = ux * gr, uy * gr, gz
    return best, nx, ny, nz


@njit(cache=True)
def collider_sdf_local(shape, d0, d1, d2, d3, d4, gate_open, qx, qy, qz):
    """Dispatch on shape code; returns (sdf, nx, ny, nz) in the local frame."""
    if shape == SHAPE_PLANE:
        return qz, 0.0, 0.0, 1.0
    if shape == SHAPE_CYLINDER:
        return _cylinder_sdf(qx, qy, qz, d0, d1)
    if shape == SHAPE_OPEN_BOX:
        return _open_box_sdf(qx, qy, qz, d0, d1, d2, d3, d4)
    return _funnel_sdf(qx, qy, qz, d0, d1, d2, d3, gate_open)


@njit(cache=True)
def sdf_query(ctypes, cdata, c, px, py, pz):
    """World-frame SDF and normal of collider ``c`` at a point."""
    ox = cdata[c, 0]
    oy = cdata[c, 1]
    oz = cdata[c, 2]
    r00, r01, r02 = cdata[c, 3], cdata[c, 4], cdata[c, 5]
    r10, r11, r12 = cdata[c, 6], cdata[c, 7], cdata[c, 8]
    r20, r21, r22 = cdata[c, 9], cdata[c, 10], cdata[c, 11]
    tx, ty, tz = px - ox, py - oy, pz - oz
    qx = r00 * tx + r10 * ty + r20 * tz
    qy = r01 * tx + r11 * ty + r21 * tz
    qz = r02 * tx + r12 * ty + r22 * tz
    s, lx, ly, lz = collider_sdf_local(
        ctypes[c], cdata[c, 12], cdata[c, 13], cdata[c, 14], cdata[c, 15],
        cdata[c, 16], cdata[c, 17], qx, qy, qz)
    wx = r00 * lx + r01 * ly + r02 * lz
    wy = r10 * lx + r11 * ly + r12 * lz
    wz = r20 * lx + r21 * ly + r22 * lz
    return s, wx, wy, wz


# ---------------------------------------------------------------------------
# spatial hash grid
# ---------------------------------------------------------------------------

@njit(cache=True)
def find_pairs(pos, cell_size, radius, max_pairs):
    """All unordered particle pairs with center distance <= radius.

    Dense uniform grid sized to the current particle bounding box,
    rebuilt from scratch. Pair order is (i ascending, then cell scan
    order), fixed for a given position array. Returns
    (pairs_i, pairs_j, count); count == -1 signals pair-capacity
    overflow and count == -2 a grid too large to be a sane scene.
    """
    n = pos.shape[0]
    pairs_i = np.empty(max_pairs, dtype=np.int64)
    pairs_j = np.empty(max_pairs, dtype=np.int64)
    if n < 2:
        return pairs_i, pairs_j, 0

    minx = miny = minz = 1e300
    maxx = maxy = maxz = -1e300
    for i in range(n):
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            return pairs_i, pairs_j, -2
        if x < minx:
            minx = x
        if x > maxx:
            maxx = x
        if y < miny:
            miny = y
        if y > maxy:
            maxy = y
        if z < minz:
            minz = z
        if z > maxz:
            maxz = z

    inv = 1.0 / cell_size
    nx = np.int64(math.floor((maxx - minx) * inv)) + 1
    ny = np.int64(math.floor((maxy - miny) * inv)) + 1
    nz = np.int64(math.floor((maxz - minz) * inv)) + 1
    total = nx * ny * nz
    if total > _MAX_GRID_CELLS or total < 1:
        return pairs_i, pairs_j, -2

    head = np.full(total, -1, dtype=np.int32)
    nxt = np.empty(n, dtype=np.int32)
    cix = np.empty(n, dtype=np.int64)
    ciy = np.empty(n, dtype=np.int64)
    ciz = np.empty(n, dtype=np.int64)
    for i in range(n):
        ix = np.int64(math.floor((pos[i, 0] - minx) * inv))
        iy = np.int64(math.floor((pos[i, 1] - miny) * inv))
        iz = np.int64(math.floor((pos[i, 2] - minz) * inv))
        cix[i] = ix
        ciy[i] = iy
        ciz[i] = iz
        c = ix + nx * (iy + ny * iz)
        nxt[i] = head[c]
        head[c] = i

    # forward half-stencil: each unordered cell pair is visited once;
    # the home cell uses j > i to break symmetry
    r2 = radius * radius
    count = 0
    for i in range(n):
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        for s in range(14):
            dx = _STENCIL[s, 0]
            dy = _STENCIL[s, 1]
            dz = _STENCIL[s, 2]
            ix = cix[i] + dx
            iy = ciy[i] + dy
            iz = ciz[i] + dz
            if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
                continue
            home = dx == 0 and dy == 0 and dz == 0
            j = head[ix + nx * (iy + ny * iz)]
            while j >= 0:
                if not home or j > i:
                    ddx = x - pos[j, 0]
                    ddy = y - pos[j, 1]
                    ddz = z - pos[j, 2]
                    if ddx * ddx + ddy * ddy + ddz * ddz <= r2:
                        if count >= max_pairs:
                            return pairs_i, pairs_j, -1
                        pairs_i[count] = i
                        pairs_j[count] = j
                        count += 1
                j = nxt[j]
    return pairs_i, pairs_j, count


@njit(cache=True)
def max_pair_overlap(pos, diameter):
    """Largest pairwise penetration depth (0 when contact-free)."""
    max_pairs = 96 * pos.shape[0] + 64
    pi, pj, m = find_pairs(pos, diameter, diameter, max_pairs)
    worst = 0.0
    for k in range(m):
        i = pi[k]
        j = pj[k]
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if diameter - d > worst:
            worst = diameter - d
    return worst


@njit(cache=True)
def max_collider_penetration(pos, ctypes, cdata, radius):
    """Largest penetration of any particle into any collider surface."""
    worst = 0.0
    for c in range(ctypes.shape[0]):
        for i in range(pos.shape[0]):
            s, _, _, _ = sdf_query(ctypes, cdata, c, pos[i, 0], pos[i, 1],
                                   pos[i, 2])
            pen = radius - s
            if pen > worst:
                worst = pen
    return worst


# ---------------------------------------------------------------------------
# projection step
# ---------------------------------------------------------------------------

@njit(cache=True)
def step_kernel(pos, vel, prev,
                ctypes, cdata,
                diameter, friction, floor_pair, floor_col,
                friction_pen_clamp, friction_shell, kinetic_scale,
                bond_pull, bond_reach, bond_shear,
                sor_omega, stack_bias, cohesion, k_cohesion,
                cohesion_radius,
                adhesion_strength, adhesion_range,
                n_iters, dt, g_eff, damp_factor, max_speed,
                max_pairs, world_bound):
    """One position-projection step, in place. Returns a status code.

    0 = ok, 1 = non-finite or out-of-world coordinate, 2 = pair overflow.
    """
    n = pos.shape[0]
    radius = 0.5 * diameter

    # 1) damp, gravity, predict
    for i in range(n):
        vx = vel[i, 0] * damp_factor
        vy = vel[i, 1] * damp_factor
        vz = vel[i, 2] * damp_factor - g_eff * dt
        sp = math.sqrt(vx * vx + vy * vy + vz * vz)
        if sp > max_speed:
            f = max_speed / sp
            vx *= f
            vy *= f
            vz *= f
        prev[i, 0] = pos[i, 0]
        prev[i, 1] = pos[i, 1]
        prev[i, 2] = pos[i, 2]
        pos[i, 0] += vx * dt
        pos[i, 1] += vy * dt
        pos[i, 2] += vz * dt

    # 2) neighbor pairs on predicted positions
    pairs_i, pairs_j, n_pairs = find_pairs(pos, cohesion_radius,
                                           cohesion_radius, max_pairs)
    if n_pairs == -2:
        return 1
    if n_pairs < 0:
        return 2

    n_col = ctypes.shape[0]
    # Cohesion is a one-way tensile bond: it damps the *opening rate* of
    # near-contact pairs instead of attracting them. A resting packing
    # feels no cohesive force at all (static attraction squeezes the
    # bulk and liquefies slopes); only pairs actively separating inside
    # the interaction shell are pulled back, strongest near contact.
    beta = k_cohesion * cohesion
    if beta > 0.95:
        beta = 0.95
    inv_span = 1.0 / (cohesion_radius - diameter)
    fric_reach = diameter + friction_shell

    # 3) constraint projection, fixed order
    for _ in range(n_iters):
        for k in range(n_pairs):
            i = pairs_i[k]
            j = pairs_j[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                continue
            nx, ny, nz = dx / d, dy / d, dz / d
            if d < diameter:
                # non-penetration, over-relaxed so support propagates
                # through stacks within few iterations. Under gravity the
                # upper particle takes the larger share (shock
                # propagation): splitting equally re-injects half of
                # every correction into the column below, which leaves
                # tall stacks permanently interpenetrated. Without
                # gravity there is no "up" and the split is symmetric.
                c = sor_omega * (diameter - d)
                if g_eff > 0.0:
                    wi = 0.5 + 0.5 * stack_bias * nz
                else:
                    wi = 0.5
                wj = 1.0 - wi
                pos[i, 0] += wi * c * nx
                pos[i, 1] += wi * c * ny
                pos[i, 2] += wi * c * nz
                pos[j, 0] -= wj * c * nx
                pos[j, 1] -= wj * c * ny
                pos[j, 2] -= wj * c * nz
            if friction > 0.0 and d < fric_reach:
                # Pair friction acts in a thin shell beyond touching, not
                # only on overlapping pairs, and its cap keeps a
                # load-independent floor. Smooth spheres get trapped in
                # surface pockets only below ~25 degrees, so with a purely
                # load-proportional Coulomb cap every poured heap
                # saturates there no matter the coefficient; the floor
                # stands in for the shape interlock of real (angular)
                # grains, which resists sliding even at grazing contact.
                # Walls are smooth, so the collider cap below gets a
                # separate (essentially zero) floor.
                rx = (pos[i, 0] - prev[i, 0]) - (pos[j, 0] - prev[j, 0])
                ry = (pos[i, 1] - prev[i, 1]) - (pos[j, 1] - prev[j, 1])
                rz = (pos[i, 2] - prev[i, 2]) - (pos[j, 2] - prev[j, 2])
                rn = rx * nx + ry * ny + rz * nz
                tx = rx - rn * nx
                ty = ry - rn * ny
                tz = rz - rn * nz
                tl = math.sqrt(tx * tx + ty * ty + tz * tz)
                if tl > 1e-300:
                    # the depth term is clamped so crushed clusters stay
                    # able to shear apart while they relax
                    pen_t = diameter - d
                    if pen_t < 0.0:
                        pen_t = 0.0
                    elif pen_t > friction_pen_clamp:
                        pen_t = friction_pen_clamp
                    cap = friction * (pen_t + floor_pair)
                    scale = 1.0 if tl <= cap else cap / tl
                    hx = 0.5 * scale * tx
                    hy = 0.5 * scale * ty
                    hz = 0.5 * scale * tz
                    pos[i, 0] -= hx
                    pos[i, 1] -= hy
                    pos[i, 2] -= hz
                    pos[j, 0] += hx
                    pos[j, 1] += hy
                    pos[j, 2] += hz
            if d >= diameter and d < cohesion_radius:
                # d is re-evaluated each iteration and may have left the
                # shell the pair list was built from; past the shell the
                # proximity weight would go negative and repel
                gap = d - diameter
                pull = 0.0
                if beta > 0.0:
                    # separation-rate damping: resists opening motion
                    rx = (pos[i, 0] - prev[i, 0]) - (pos[j, 0] - prev[j, 0])
                    ry = (pos[i, 1] - prev[i, 1]) - (pos[j, 1] - prev[j, 1])
                    rz = (pos[i, 2] - prev[i, 2]) - (pos[j, 2] - prev[j, 2])
                    rn = rx * nx + ry * ny + rz * nz
                    if rn > 0.0:
                        x = (cohesion_radius - d) * inv_span
                        pull = beta * x * rn
                if bond_pull > 0.0 and d < bond_reach:
                    # static tensile bond: crawls the pair back toward
                    # contact regardless of motion
                    pull += bond_pull
                if pull > 0.0:
                    if pull > gap:
                        pull = gap
                    # closing displacements use the same biased split as
                    # the overlap resolution above, mirrored. With a
                    # symmetric 0.5 split a bonded packing turns into an
                    # upward ratchet: gravity re-overlaps pairs at the
                    # bottom, the biased split resolves them mostly
                    # upward, and a symmetric bond closure then hoists
                    # the lower particle by half of every reopened gap,
                    # so the whole charge climbs with no external drive.
                    # Using identical weights for opening and closing
                    # makes each open-close cycle cancel exactly.
                    if g_eff > 0.0:
                        wi = 0.5 + 0.5 * stack_bias * nz
                    else:
                        wi = 0.5
                    wj = 1.0 - wi
                    pos[i, 0] -= wi * pull * nx
                    pos[i, 1] -= wi * pull * ny
                    pos[i, 2] -= wi * pull * nz
                    pos[j, 0] += wj * pull * nx
                    pos[j, 1] += wj * pull * ny
                    pos[j, 2] += wj * pull * nz
            if bond_shear > 0.0 and d < bond_reach:
                # bond shear strength: bonded pairs resist relative
                # tangential motion up to a yield cap. Friction only
                # covers overlapping pairs, so without this the bond
                # network has no rigidity and creeps flat through
                # gap states. The split is symmetric: tangential ops
                # keep the pair midpoint, so no drift can build up
                rx = (pos[i, 0] - prev[i, 0]) - (pos[j, 0] - prev[j, 0])
                ry = (pos[i, 1] - prev[i, 1]) - (pos[j, 1] - prev[j, 1])
                rz = (pos[i, 2] - prev[i, 2]) - (pos[j, 2] - prev[j, 2])
                rn = rx * nx + ry * ny + rz * nz
                tx = rx - rn * nx
                ty = ry - rn * ny
                tz = rz - rn * nz
                tl = math.sqrt(tx * tx + ty * ty + tz * tz)
                if tl > 1e-300:
                    scale = 1.0 if tl <= bond_shear else bond_shear / tl
                    hx = 0.5 * scale * tx
                    hy = 0.5 * scale * ty
                    hz = 0.5 * scale * tz
                    pos[i, 0] -= hx
                    pos[i, 1] -= hy
                    pos[i, 2] -= hz
                    pos[j, 0] += hx
                    pos[j, 1] += hy
                    pos[j, 2] += hz

        for c in range(n_col):
            # polished fixtures (e.g. the funnel bore) run with scaled-
            # down surface friction and adhesion so wall coupling does
            # not drag the charge around with a moving collider
            fric_c = friction * cdata[c, 18]
            adh_c = adhesion_strength * cdata[c, 19]
            for i in range(n):
                s, nx, ny, nz = sdf_query(ctypes, cdata, c, pos[i, 0],
                                          pos[i, 1], pos[i, 2])
                pen = radius - s
                if pen > 0.0:
                    pos[i, 0] += pen * nx
                    pos[i, 1] += pen * ny
                    pos[i, 2] += pen * nz
                if fric_c > 0.0 and pen > 0.0:
                    rx = pos[i, 0] - prev[i, 0]
                    ry = pos[i, 1] - prev[i, 1]
                    rz = pos[i, 2] - prev[i, 2]
                    rn = rx * nx + ry * ny + rz * nz
                    tx = rx - rn * nx
                    ty = ry - rn * ny
                    tz = rz - rn * nz
                    tl = math.sqrt(tx * tx + ty * ty + tz * tz)
                    if tl > 1e-300:
                        pen_t = pen if pen < friction_pen_clamp \
                            else friction_pen_clamp
                        cap = fric_c * (pen_t + floor_col)
                        scale = 1.0 if tl <= cap else cap / tl
                        pos[i, 0] -= scale * tx
                        pos[i, 1] -= scale * ty
                        pos[i, 2] -= scale * tz
                if pen <= 0.0 and adh_c > 0.0:
                    gap = -pen  # s - radius
                    if gap < adhesion_range:
                        # one-way boundary bond, mirroring pair cohesion:
                        # damp motion away from the surface
                        rx = pos[i, 0] - prev[i, 0]
                        ry = pos[i, 1] - prev[i, 1]
                        rz = pos[i, 2] - prev[i, 2]
                        rn = rx * nx + ry * ny + rz * nz
                        if rn > 0.0:
                            pull = (adh_c
                                    * (1.0 - gap / adhesion_range) * rn)
                            if pull > gap:
                                pull = gap
                            pos[i, 0] -= pull * nx
                            pos[i, 1] -= pull * ny
                            pos[i, 2] -= pull * nz

    # 4) velocities from displacement; sanity check
    status = 0
    inv_dt = 1.0 / dt
    for i in range(n):
        vel[i, 0] = (pos[i, 0] - prev[i, 0]) * inv_dt
        vel[i, 1] = (pos[i, 1] - prev[i, 1]) * inv_dt
        vel[i, 2] = (pos[i, 2] - prev[i, 2]) * inv_dt
        for a in range(3):
            x = pos[i, a]
            if not math.isfinite(x) or abs(x) > world_bound:
                status = 1

    # 5) kinetic friction on velocities. The projection above only
    # cancels the normal component of contact motion; grains keep their
    # tangential speed through grazing contacts, so avalanches run out
    # until every slope is shallow no matter how high the coefficient
    # is. Damping relative tangential velocity per contact, in
    # proportion to the coefficient, gives flowing material a
    # mu-dependent stopping length (and so a mu-dependent heap) while
    # leaving statics, where that velocity is already zero, untouched.
    if kinetic_scale > 0.0 and friction > 0.0:
        s_pair = kinetic_scale * friction
        if s_pair > 0.9:
            s_pair = 0.9
        half = 0.5 * s_pair
        for k in range(n_pairs):
            i = pairs_i[k]
            j = pairs_j[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12 or d >= diameter:
                continue
            nx, ny, nz = dx / d, dy / d, dz / d
            rx = vel[i, 0] - vel[j, 0]
            ry = vel[i, 1] - vel[j, 1]
            rz = vel[i, 2] - vel[j, 2]
            rn = rx * nx + ry * ny + rz * nz
            tx = rx - rn * nx
            ty = ry - rn * ny
            tz = rz - rn * nz
            vel[i, 0] -= half * tx
            vel[i, 1] -= half * ty
            vel[i, 2] -= half * tz
            vel[j, 0] += half * tx
            vel[j, 1] += half * ty
            vel[j, 2] += half * tz
        for c in range(n_col):
            s_col = kinetic_scale * friction * cdata[c, 18]
            if s_col > 0.9:
                s_col = 0.9
            if s_col <= 0.0:
                continue
            for i in range(n):
                s, nx, ny, nz = sdf_query(ctypes, cdata, c, pos[i, 0],
                                          pos[i, 1], pos[i, 2])
                if radius - s <= 0.0:
                    continue
                rn = vel[i, 0] * nx + vel[i, 1] * ny + vel[i, 2] * nz
                vel[i, 0] -= s_col * (vel[i, 0] - rn * nx)
                vel[i, 1] -= s_col * (vel[i, 1] - rn * ny)
                vel[i, 2] -= s_col * (vel[i, 2] - rn * nz)
    return status


@njit(cache=True)
def max_speed_of(vel):
    worst = 0.0
    for i in range(vel.shape[0]):
        s = math.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2)
        if s > worst:
            worst = s
    return worst
