"""Pure-numpy segment/building crossing kernel (fallback for ``_crossings``).

Loops over buildings and vectorises over segments. The compiled twin in
``_crossings.pyx`` implements exactly the same arithmetic.
"""
import numpy as np


def _grid_counts(boxes, cells):
    ext = np.stack([boxes[:, 1] - boxes[:, 0],
                    boxes[:, 3] - boxes[:, 2],
                    boxes[:, 5] - boxes[:, 4]], axis=1)
    return np.rint(ext / cells).astype(np.int64)


def _planes_between(a, b, origin, cell, ncell):
    """Number of internal grid planes strictly between coordinates a and b."""
    lo = (np.minimum(a, b) - origin) / cell
    hi = (np.maximum(a, b) - origin) / cell
    kmin = np.maximum(np.floor(lo) + 1, 1)
    kmax = np.minimum(np.ceil(hi) - 1, ncell - 1)
    return np.maximum(kmax - kmin + 1, 0).astype(np.int64)


def _clip(p0, d, lo, hi, axes):
    n = p0.shape[0]
    t_in = np.full(n, -np.inf)
    t_out = np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in axes:
            da = d[:, a]
            ta = (lo[a] - p0[:, a]) / da
            tb = (hi[a] - p0[:, a]) / da
            tmin = np.minimum(ta, tb)
            tmax = np.maximum(ta, tb)
            flat = da == 0.0
            if flat.any():
                inside = (p0[:, a] > lo[a]) & (p0[:, a] < hi[a])
                tmin = np.where(flat, np.where(inside, -np.inf, np.inf), tmin)
                tmax = np.where(flat, np.where(inside, np.inf, -np.inf), tmax)
            t_in = np.maximum(t_in, tmin)
            t_out = np.minimum(t_out, tmax)
    return t_in, t_out


def segment_crossings(p0, p1, b0, b1, boxes, cells):
    """Count wall, floor and facade crossings of segments ``p0 -> p1``.

    Parameters
    ----------
    p0, p1 : (N, 3) float arrays of segment endpoints.
    b0, b1 : (N,) int arrays, index of the building containing each endpoint
        or -1 when the endpoint is outdoors.
    boxes : (B, 6) float array ``[x0, x1, y0, y1, z0, z1]`` per building.
    cells : (B, 3) float array of apartment sizes along x, y, z.

    Returns
    -------
    dict of arrays: ``walls``, ``floors``, ``external`` (totals over all
    buildings); ``walls0``/``floors0`` and ``walls1``/``floors1`` (counts
    inside the endpoint buildings); ``t_exit`` (segment parameter where it
    leaves ``b0``, 0 when outdoors); ``t_entry`` (where it enters ``b1``,
    1 when outdoors); ``occluded`` (2-D footprint of some other building
    intersects the open segment).
    """
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    p1 = np.ascontiguousarray(p1, dtype=np.float64)
    b0 = np.asarray(b0, dtype=np.int64)
    b1 = np.asarray(b1, dtype=np.int64)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 6)
    cells = np.asarray(cells, dtype=np.float64).reshape(-1, 3)
    n = p0.shape[0]
    d = p1 - p0
    counts = _grid_counts(boxes, cells)

    walls = np.zeros(n, np.int64)
    floors = np.zeros(n, np.int64)
    external = np.zeros(n, np.int64)
    walls0 = np.zeros(n, np.int64)
    floors0 = np.zeros(n, np.int64)
    walls1 = np.zeros(n, np.int64)
    floors1 = np.zeros(n, np.int64)
    t_exit = np.where(b0 >= 0, 1.0, 0.0)
    t_entry = np.where(b1 >= 0, 0.0, 1.0)
    occluded = np.zeros(n, bool)

    for k in range(boxes.shape[0]):
        lo = boxes[k, [0, 2, 4]]
        hi = boxes[k, [1, 3, 5]]
        t_in, t_out = _clip(p0, d, lo, hi, (0, 1, 2))
        ca = np.maximum(t_in, 0.0)
        cb = np.minimum(t_out, 1.0)
        hit = ca < cb
        if hit.any():
            # rows that miss the box may hold inf/nan here; they are masked below
            with np.errstate(invalid="ignore"):
                xa = p0 + ca[:, None] * d
                xb = p0 + cb[:, None] * d
                w = (_planes_between(xa[:, 0], xb[:, 0], lo[0], cells[k, 0], counts[k, 0])
                     + _planes_between(xa[:, 1], xb[:, 1], lo[1], cells[k, 1], counts[k, 1]))
                f = _planes_between(xa[:, 2], xb[:, 2], lo[2], cells[k, 2], counts[k, 2])
            w = np.where(hit, w, 0)
            f = np.where(hit, f, 0)
            e = (hit & (t_in > 0.0)).astype(np.int64) + (hit & (t_out < 1.0)).astype(np.int64)
            walls += w
            floors += f
            external += e
            at0 = b0 == k
            at1 = b1 == k
            walls0 = np.where(at0, w, walls0)
            floors0 = np.where(at0, f, floors0)
            walls1 = np.where(at1, w, walls1)
            floors1 = np.where(at1, f, floors1)
            t_exit = np.where(at0 & hit, cb, t_exit)
            t_entry = np.where(at1 & hit & (b0 != k), ca, t_entry)
        s_in, s_out = _clip(p0, d, lo, hi, (0, 1))
        hit2 = (np.maximum(s_in, 0.0) < np.minimum(s_out, 1.0)) & (b0 != k) & (b1 != k)
        occluded |= hit2

    return {
        "walls": walls, "floors": floors, "external": external,
        "walls0": walls0, "floors0": floors0, "walls1": walls1, "floors1": floors1,
        "t_exit": t_exit, "t_entry": t_entry, "occluded": occluded,
    }
