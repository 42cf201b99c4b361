"""Pure numpy transfer kernels (fallback for the compiled ``_transfer`` module).

Conventions shared with the compiled version:

* ``bands[ax]`` has shape ``(N, 2b+1)``; ``bands[ax][y, j]`` is the one-step
  probability of moving from ``x = y + j - b`` to ``y`` along axis ``ax``.
* Arrays over sites are flat, row-major over ``shape``.
* ``mult`` has one row (reused every step) or one row per step.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def apply_bands(w: np.ndarray, bands, shape) -> np.ndarray:
    """One kernel step ``w <- K w`` on a flat weight vector."""
    d = len(shape)
    cur = w.reshape(shape)
    for ax in range(d):
        band = bands[ax]
        n, width = band.shape
        b = (width - 1) // 2
        outer = int(np.prod(shape[:ax], dtype=np.int64))
        inner = int(np.prod(shape[ax + 1 :], dtype=np.int64))
        src = cur.reshape(outer, n, inner)
        out = np.zeros_like(src)
        for j in range(width):
            off = j - b
            lo = max(0, -off)
            hi = min(n, n - off)
            if hi <= lo:
                continue
            out[:, lo:hi, :] += band[lo:hi, j][None, :, None] * src[:, lo + off : hi + off, :]
        cur = out.reshape(shape)
    return cur.reshape(-1)


def forward(bands, shape, w0, mult, n_steps, mask=None, store=False):
    """Normalized forward recursion.

    Returns ``(increments, w_final, stored)`` where ``increments[k]`` is the
    log of the total mass after step ``k + 1`` relative to the normalized
    mass before it, and ``stored`` (if requested) holds the normalized
    weights before the first step and after every step.
    """
    w = np.array(w0, dtype=float)
    s0 = w.sum()
    if s0 > 0:
        w /= s0
    inc = np.empty(n_steps)
    stored = np.empty((n_steps + 1, w.size)) if store else None
    if store:
        stored[0] = w
    single = mult.shape[0] == 1
    dead = s0 <= 0
    for k in range(n_steps):
        if dead:
            inc[k] = -np.inf
            if store:
                stored[k + 1] = 0.0
            continue
        w = apply_bands(w, bands, shape)
        w *= mult[0 if single else k]
        if mask is not None:
            w *= mask[k]
        s = w.sum()
        if s > 0:
            w /= s
            inc[k] = np.log(s)
        else:
            dead = True
            w[:] = 0.0
            inc[k] = -np.inf
        if store:
            stored[k + 1] = w
    return inc, w, stored


def backward_sample(bands, shape, stored, uniforms):
    """Exact backward sampling of site sequences given stored forward weights."""
    d = len(shape)
    n_steps = stored.shape[0] - 1
    count = uniforms.shape[0]
    paths = np.empty((count, n_steps + 1), dtype=np.int64)
    if count == 0:
        return paths
    cum = np.cumsum(stored[n_steps])
    total = cum[-1]
    last = cum.size - 1 - int(np.argmax(stored[n_steps][::-1] > 0))
    paths[:, n_steps] = np.minimum(np.searchsorted(cum, uniforms[:, n_steps] * total, side="right"), last)
    width = bands[0].shape[1]
    b = (width - 1) // 2
    offsets = np.stack(np.meshgrid(*[np.arange(-b, b + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    dims = np.asarray(shape)
    for k in range(n_steps - 1, -1, -1):
        y = np.stack(np.unravel_index(paths[:, k + 1], shape), axis=-1)  # (count, d)
        x = y[:, None, :] + offsets[None, :, :]  # (count, C, d)
        valid = np.all((x >= 0) & (x < dims), axis=-1)
        xc = np.where(valid[..., None], x, 0)
        prob = np.ones(valid.shape)
        for ax in range(d):
            prob *= bands[ax][y[:, ax][:, None], offsets[None, :, ax] + b]
        flat = np.ravel_multi_index(tuple(xc[..., ax] for ax in range(d)), shape)
        prob *= stored[k][flat]
        prob[~valid] = 0.0
        c = np.cumsum(prob, axis=1)
        pick = (c <= (uniforms[:, k] * c[:, -1])[:, None]).sum(axis=1)
        last = c.shape[1] - 1 - np.argmax(prob[:, ::-1] > 0, axis=1)
        pick = np.minimum(pick, last)
        paths[:, k] = flat[np.arange(count), pick]
    return paths
