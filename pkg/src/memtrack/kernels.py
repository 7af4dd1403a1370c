"""Inference kernel for two-stage memory attention on one target frame.

``memory_attention_frame`` maps a query map and a memory bank to the copied
values for every query cell. Two interchangeable backends:

* ``numba``: per-cell loops compiled with ``@njit`` (default when available);
* ``numpy``: vectorized over query cells, one pass per window site.

``MEMTRACK_NO_NUMBA=1`` makes ``numpy`` the default. Both compute in float64.
"""
import numpy as np

from ._accel import njit, resolve_backend


@njit
def _bilinear_coeffs(px, py, h, w):
    px = min(max(px, 0.0), w - 1.0)
    py = min(max(py, 0.0), h - 1.0)
    x0 = min(int(np.floor(px)), w - 1)
    y0 = min(int(np.floor(py)), h - 1)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = px - x0
    fy = py - y0
    return x0, y0, x1, y1, fx, fy


@njit
def _memory_attention_nb(q, keys, values, dilations, r_loc, r_fine):
    C, h, w = q.shape
    M = keys.shape[0]
    D = values.shape[1]
    k_loc = 2 * r_loc + 1
    k_fine = 2 * r_fine + 1
    n_loc = k_loc * k_loc
    n_fine = k_fine * k_fine
    out = np.zeros((D, h, w))
    loc_logit = np.empty(n_loc)
    loc_ok = np.zeros(n_loc, dtype=np.bool_)
    loc_x = np.empty(n_loc)
    loc_y = np.empty(n_loc)
    logits = np.empty(M * n_fine)
    cx0 = np.empty(M * n_fine, dtype=np.int64)
    cy0 = np.empty(M * n_fine, dtype=np.int64)
    cx1 = np.empty(M * n_fine, dtype=np.int64)
    cy1 = np.empty(M * n_fine, dtype=np.int64)
    cfx = np.empty(M * n_fine)
    cfy = np.empty(M * n_fine)
    qv = np.empty(C)
    for y in range(h):
        for x in range(w):
            for c in range(C):
                qv[c] = q[c, y, x]
            for m in range(M):
                g = dilations[m]
                # stage 1: dilated heatmap and soft-argmax
                best = -np.inf
                j = 0
                for dy in range(-r_loc, r_loc + 1):
                    for dx in range(-r_loc, r_loc + 1):
                        sx = x + g * dx
                        sy = y + g * dy
                        ok = sx >= 0 and sx < w and sy >= 0 and sy < h
                        loc_ok[j] = ok
                        loc_x[j] = min(max(sx, 0), w - 1)
                        loc_y[j] = min(max(sy, 0), h - 1)
                        if ok:
                            s = 0.0
                            for c in range(C):
                                s += qv[c] * keys[m, c, sy, sx]
                            loc_logit[j] = s
                            if s > best:
                                best = s
                        j += 1
                tot = 0.0
                px = 0.0
                py = 0.0
                for j in range(n_loc):
                    if loc_ok[j]:
                        e = np.exp(loc_logit[j] - best)
                        tot += e
                        px += e * loc_x[j]
                        py += e * loc_y[j]
                px /= tot
                py /= tot
                # stage 2: bilinear keys around the ROI center
                j = m * n_fine
                for dy in range(-r_fine, r_fine + 1):
                    for dx in range(-r_fine, r_fine + 1):
                        x0, y0, x1, y1, fx, fy = _bilinear_coeffs(px + dx, py + dy, h, w)
                        w00 = (1 - fx) * (1 - fy)
                        w01 = fx * (1 - fy)
                        w10 = (1 - fx) * fy
                        w11 = fx * fy
                        s = 0.0
                        for c in range(C):
                            kv = (w00 * keys[m, c, y0, x0] + w01 * keys[m, c, y0, x1]
                                  + w10 * keys[m, c, y1, x0] + w11 * keys[m, c, y1, x1])
                            s += qv[c] * kv
                        logits[j] = s
                        cx0[j] = x0
                        cy0[j] = y0
                        cx1[j] = x1
                        cy1[j] = y1
                        cfx[j] = fx
                        cfy[j] = fy
                        j += 1
            # joint softmax over every memory frame's candidates
            best = -np.inf
            for j in range(M * n_fine):
                if logits[j] > best:
                    best = logits[j]
            tot = 0.0
            for j in range(M * n_fine):
                logits[j] = np.exp(logits[j] - best)
                tot += logits[j]
            for j in range(M * n_fine):
                a = logits[j] / tot
                m = j // n_fine
                fx = cfx[j]
                fy = cfy[j]
                w00 = a * (1 - fx) * (1 - fy)
                w01 = a * fx * (1 - fy)
                w10 = a * (1 - fx) * fy
                w11 = a * fx * fy
                for d in range(D):
                    out[d, y, x] += (w00 * values[m, d, cy0[j], cx0[j]] + w01 * values[m, d, cy0[j], cx1[j]]
                                     + w10 * values[m, d, cy1[j], cx0[j]] + w11 * values[m, d, cy1[j], cx1[j]])
    return out


def _bilinear_gather(fm, px, py):
    """fm (D, h, w); px, py arrays of any shape -> (D, *shape)."""
    D, h, w = fm.shape
    px = np.clip(px, 0.0, w - 1.0)
    py = np.clip(py, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(px).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(py).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = px - x0
    fy = py - y0
    return ((1 - fx) * (1 - fy) * fm[:, y0, x0] + fx * (1 - fy) * fm[:, y0, x1]
            + (1 - fx) * fy * fm[:, y1, x0] + fx * fy * fm[:, y1, x1])


def _memory_attention_np(q, keys, values, dilations, r_loc, r_fine):
    C, h, w = q.shape
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    r = np.arange(-r_fine, r_fine + 1)
    fdy, fdx = np.meshgrid(r, r, indexing="ij")
    fdx, fdy = fdx.reshape(-1, 1, 1), fdy.reshape(-1, 1, 1)
    all_logits, all_px, all_py = [], [], []
    for m in range(keys.shape[0]):
        g = int(dilations[m])
        k = keys[m]
        pad = r_loc * g
        kp = np.pad(k, ((0, 0), (pad, pad), (pad, pad)))
        n = (2 * r_loc + 1) ** 2
        loc = np.full((n, h, w), -np.inf)
        sx = np.empty((n, h, w))
        sy = np.empty((n, h, w))
        j = 0
        for dy in range(-r_loc, r_loc + 1):
            for dx in range(-r_loc, r_loc + 1):
                ok = ((xs + g * dx >= 0) & (xs + g * dx < w) & (ys + g * dy >= 0) & (ys + g * dy < h))
                shifted = kp[:, pad + g * dy:pad + g * dy + h, pad + g * dx:pad + g * dx + w]
                loc[j] = np.where(ok, np.einsum("chw,chw->hw", q, shifted), -np.inf)
                sx[j] = np.clip(xs + g * dx, 0, w - 1)
                sy[j] = np.clip(ys + g * dy, 0, h - 1)
                j += 1
        e = np.exp(loc - loc.max(axis=0, keepdims=True))
        H = e / e.sum(axis=0, keepdims=True)
        px = (H * sx).sum(axis=0)
        py = (H * sy).sum(axis=0)
        cpx = px[None] + fdx
        cpy = py[None] + fdy
        kk = _bilinear_gather(k, cpx, cpy)  # (C, n_fine, h, w)
        all_logits.append(np.einsum("chw,cnhw->nhw", q, kk))
        all_px.append(cpx)
        all_py.append(cpy)
    logits = np.concatenate(all_logits, axis=0)
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    A = e / e.sum(axis=0, keepdims=True)
    out = np.zeros((values.shape[1], h, w))
    n_fine = fdx.shape[0]
    for m in range(keys.shape[0]):
        vv = _bilinear_gather(values[m], all_px[m], all_py[m])
        out += (vv * A[None, m * n_fine:(m + 1) * n_fine]).sum(axis=1)
    return out


def memory_attention_frame(q, keys, values, dilations, r_loc: int = 6, r_fine=None, backend=None):
    """Copy ``values`` into every cell of the query map.

    :param q: (C, h, w) query features of the target frame
    :param keys: (M, C, h, w) memory keys
    :param values: (M, D, h, w) memory values (colors or label probabilities)
    :param dilations: (M,) localization dilation per memory frame
    :return: (D, h, w) float64
    """
    r_fine = r_loc if r_fine is None else r_fine
    q = np.ascontiguousarray(q, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    dilations = np.ascontiguousarray(dilations, dtype=np.int64)
    if keys.ndim != 4 or keys.shape[0] == 0:
        raise ValueError("memory bank is empty")
    if keys.shape[1:] != q.shape or values.shape[0] != keys.shape[0] or values.shape[2:] != q.shape[1:]:
        raise ValueError(f"inconsistent shapes q={q.shape} keys={keys.shape} values={values.shape}")
    if len(dilations) != keys.shape[0] or np.any(dilations < 1):
        raise ValueError("need one dilation >= 1 per memory frame")
    if resolve_backend(backend) == "numba":
        return _memory_attention_nb(q, keys, values, dilations, int(r_loc), int(r_fine))
    return _memory_attention_np(q, keys, values, dilations, int(r_loc), int(r_fine))
