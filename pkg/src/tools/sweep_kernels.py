"""
Sweep Kernels Module

Compiled kernels shared by the grid tools and the sweep solver. Everything
here works in index coordinates: node i sits at integer multi-index i and the
viewpoint at the real vector s* = (x* - lo) / h. The neighbour box of a node is
then the unit cube [i - 1, i + 1], so the foot point of a ray and the weights
of the piecewise-multilinear interpolant on the exit face reduce to
per-axis fractions.

Fields are passed flat (row-major) together with their shape and strides.
"""

import numpy as np
from numba import njit

# Relative guard below which |x - x~| is treated as zero
FOOT_EPS = 1e-14


@njit(cache=True, nogil=True)
def unravel(flat, strides, idx):
    """Write the multi-index of a flat row-major offset into idx."""
    rem = flat
    for k in range(strides.size):
        idx[k] = rem // strides[k]
        rem -= idx[k] * strides[k]


@njit(cache=True, nogil=True)
def foot_stencil(idx, s_star, h, outward, frac, step):
    """
    Locate the foot point of the ray through node idx.

    For outward=False the ray runs toward the viewpoint, otherwise away from
    it. On return frac[k] and step[k] describe the exit point: along axis k it
    sits frac[k] of the way from idx[k] to idx[k] + step[k].

    Returns:
        (emax, dist): the largest index-space component of the direction and
        the physical distance |x - x~|. emax <= 1 on an inward ray means the
        viewpoint lies inside the neighbour box (the node is an anchor);
        emax == 0 means the node is the viewpoint.
    """
    dim = idx.size
    emax = 0.0
    m = 0
    for k in range(dim):
        e = s_star[k] - idx[k]
        if outward:
            e = -e
        a = abs(e)
        # strict comparison: ties resolve to the lowest axis
        if a > emax:
            emax = a
            m = k
    if emax == 0.0:
        for k in range(dim):
            frac[k] = 0.0
            step[k] = 0
        return emax, 0.0

    dist2 = 0.0
    for k in range(dim):
        e = s_star[k] - idx[k]
        if outward:
            e = -e
        if e > 0.0:
            step[k] = 1
        elif e < 0.0:
            step[k] = -1
        else:
            step[k] = 0
        if k == m:
            frac[k] = 1.0
        else:
            frac[k] = abs(e) / emax
        d = frac[k] * h[k]
        dist2 += d * d
    return emax, np.sqrt(dist2)


@njit(cache=True, nogil=True)
def stencil_value(values, shape, strides, idx, frac, step):
    """
    Evaluate the multilinear interpolant at the foot point described by frac/step.

    Corners with zero weight are skipped, so they are never read. The result
    is clamped to the range of the contributing corners.

    Returns:
        (value, ok): ok is False when a corner with positive weight falls
        outside the grid.
    """
    dim = idx.size
    base = 0
    for k in range(dim):
        base += idx[k] * strides[k]

    total = 0.0
    vmin = np.inf
    vmax = -np.inf
    for mask in range(1 << dim):
        w = 1.0
        offset = base
        for k in range(dim):
            if (mask >> k) & 1:
                if step[k] == 0:
                    w = 0.0
                    break
                w *= frac[k]
                j = idx[k] + step[k]
                if j < 0 or j >= shape[k]:
                    if frac[k] > 0.0:
                        return 0.0, False
                    w = 0.0
                    break
                offset += step[k] * strides[k]
            else:
                w *= 1.0 - frac[k]
            if w == 0.0:
                break
        if w == 0.0:
            continue
        v = values[offset]
        total += w * v
        vmin = min(vmin, v)
        vmax = max(vmax, v)
    return min(max(total, vmin), vmax), True


@njit(cache=True, nogil=True)
def interp_index(values, shape, strides, s):
    """Multilinear interpolation at continuous index coordinates s (inside the grid), clamped like stencil_value."""
    dim = s.size
    base_idx = np.empty(dim, dtype=np.int64)
    frac = np.empty(dim, dtype=np.float64)
    for k in range(dim):
        i0 = int(np.floor(s[k]))
        if i0 > shape[k] - 2:
            i0 = shape[k] - 2
        if i0 < 0:
            i0 = 0
        base_idx[k] = i0
        frac[k] = s[k] - i0

    total = 0.0
    vmin = np.inf
    vmax = -np.inf
    for mask in range(1 << dim):
        w = 1.0
        offset = 0
        for k in range(dim):
            if (mask >> k) & 1:
                w *= frac[k]
                offset += (base_idx[k] + 1) * strides[k]
            else:
                w *= 1.0 - frac[k]
                offset += base_idx[k] * strides[k]
        if w == 0.0:
            continue
        v = values[offset]
        total += w * v
        vmin = min(vmin, v)
        vmax = max(vmax, v)
    return min(max(total, vmin), vmax)


@njit(cache=True, nogil=True)
def upper_sweep(g, shape, strides, s_star, h, order, anchor_value, u, visits):
    """
    Single pass of u(x) = max{g(x), I_h u(x~)} in the given dependency order.

    Nodes whose neighbour box contains the viewpoint take
    u = max{g(x), g(x*)} with g(x*) = anchor_value.
    """
    dim = shape.size
    idx = np.empty(dim, dtype=np.int64)
    frac = np.empty(dim, dtype=np.float64)
    step = np.empty(dim, dtype=np.int64)
    eps = FOOT_EPS * h.min()

    for p in range(order.size):
        flat = order[p]
        unravel(flat, strides, idx)
        emax, dist = foot_stencil(idx, s_star, h, False, frac, step)
        if emax <= 1.0 or dist < eps:
            val = anchor_value
        else:
            val = stencil_value(u, shape, strides, idx, frac, step)[0]
        gx = g[flat]
        u[flat] = gx if gx >= val else val
        visits[flat] += 1


@njit(cache=True, nogil=True)
def lower_sweep(g, shape, strides, s_star, h, order, g_min, w, visits):
    """
    Single pass of w(x) = min{g(x), I_h w(x~_out)} in the given dependency order.

    Nodes whose outward stencil leaves the box keep w = g; the viewpoint node
    takes the minimum of g over the grid.
    """
    dim = shape.size
    idx = np.empty(dim, dtype=np.int64)
    frac = np.empty(dim, dtype=np.float64)
    step = np.empty(dim, dtype=np.int64)

    for p in range(order.size):
        flat = order[p]
        unravel(flat, strides, idx)
        gx = g[flat]
        emax, dist = foot_stencil(idx, s_star, h, True, frac, step)
        if emax == 0.0:
            w[flat] = g_min
        else:
            val, ok = stencil_value(w, shape, strides, idx, frac, step)
            if not ok:
                w[flat] = gx
            else:
                w[flat] = gx if gx <= val else val
        visits[flat] += 1


@njit(cache=True, nogil=True)
def residual_at(u, g, shape, strides, s_star, h, anchor_value, g_min, lower, flat):
    """
    Scheme residual at one node.

    upper: min{u - g, (u - I_h u(x~)) / |x - x~|}
    lower: max{w - g, (w - I_h w(x~_out)) / |x - x~_out|}
    Anchor, viewpoint and boundary nodes fall back to the obstacle term
    (or, for the lower viewpoint node, w - min g).
    """
    dim = shape.size
    idx = np.empty(dim, dtype=np.int64)
    frac = np.empty(dim, dtype=np.float64)
    step = np.empty(dim, dtype=np.int64)
    eps = FOOT_EPS * h.min()
    unravel(flat, strides, idx)
    ux = u[flat]
    gx = g[flat]

    if not lower:
        emax, dist = foot_stencil(idx, s_star, h, False, frac, step)
        if emax <= 1.0:
            # anchor node: x~ = x*, I_h u(x*) := g(x*)
            dist = 0.0
            for k in range(dim):
                d = (s_star[k] - idx[k]) * h[k]
                dist += d * d
            dist = np.sqrt(dist)
            if dist < eps:
                return ux - gx
            return min(ux - gx, (ux - anchor_value) / dist)
        val = stencil_value(u, shape, strides, idx, frac, step)[0]
        return min(ux - gx, (ux - val) / dist)

    emax, dist = foot_stencil(idx, s_star, h, True, frac, step)
    if emax == 0.0:
        return ux - g_min
    val, ok = stencil_value(u, shape, strides, idx, frac, step)
    if not ok:
        return ux - gx
    return max(ux - gx, (ux - val) / dist)


@njit(cache=True, nogil=True)
def residual_field(u, g, shape, strides, s_star, h, anchor_value, g_min, lower, out):
    """Residual at every node, written into out."""
    for flat in range(u.size):
        out[flat] = residual_at(u, g, shape, strides, s_star, h, anchor_value, g_min, lower, flat)
