# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transfer kernels.  Same contract as ``_transfer_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY
from libc.string cimport memset

cnp.import_array()

BACKEND = "cython"


cdef void _apply_axis(const double* src, double* dst, const double* band_t,
                      Py_ssize_t outer, Py_ssize_t n, Py_ssize_t inner, Py_ssize_t width) noexcept nogil:
    # band_t is the transposed band, shape (width, n); per-site sums run in
    # ascending offset order, matching the numpy fallback
    cdef Py_ssize_t b = (width - 1) // 2
    cdef Py_ssize_t o, y, i, j, off, lo, hi, base, row
    cdef const double* bj
    memset(dst, 0, outer * n * inner * sizeof(double))
    if inner == 1:
        for o in range(outer):
            base = o * n
            for j in range(width):
                off = j - b
                lo = -off if off < 0 else 0
                hi = n - off if off > 0 else n
                bj = band_t + j * n
                for y in range(lo, hi):
                    dst[base + y] += bj[y] * src[base + y + off]
        return
    for o in range(outer):
        for j in range(width):
            off = j - b
            lo = -off if off < 0 else 0
            hi = n - off if off > 0 else n
            bj = band_t + j * n
            for y in range(lo, hi):
                row = (o * n + y) * inner
                for i in range(inner):
                    dst[row + i] += bj[y] * src[row + off * inner + i]


def apply_bands(w, bands, shape):
    cdef cnp.ndarray[double, ndim=1] cur = np.ascontiguousarray(w, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=1] tmp = np.empty_like(cur)
    cdef Py_ssize_t d = len(shape), ax, outer, inner, n
    cdef cnp.ndarray[double, ndim=2] band
    for ax in range(d):
        band = np.ascontiguousarray(np.asarray(bands[ax], dtype=np.float64).T)
        n = shape[ax]
        outer = int(np.prod(shape[:ax], dtype=np.int64))
        inner = int(np.prod(shape[ax + 1:], dtype=np.int64))
        _apply_axis(&cur[0], &tmp[0], &band[0, 0], outer, n, inner, band.shape[0])
        cur, tmp = tmp, cur
    return cur


def forward(bands, shape, w0, mult, Py_ssize_t n_steps, mask=None, bint store=False):
    cdef Py_ssize_t d = len(shape), ax, k, s_idx
    cdef Py_ssize_t S = int(np.prod(shape, dtype=np.int64))
    cdef cnp.ndarray[double, ndim=1] cur = np.array(w0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] tmp = np.empty(S)
    cdef cnp.ndarray[double, ndim=2] mult_c = np.ascontiguousarray(mult, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] mask_c
    cdef bint has_mask = mask is not None
    if has_mask:
        mask_c = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef bint single = mult_c.shape[0] == 1
    cdef cnp.ndarray[double, ndim=1] inc = np.empty(n_steps)
    cdef cnp.ndarray[double, ndim=2] stored
    if store:
        stored = np.empty((n_steps + 1, S))
    else:
        stored = np.empty((0, 0))
    bands_c = [np.ascontiguousarray(np.asarray(bd, dtype=np.float64).T) for bd in bands]
    cdef double* band_ptrs[16]
    cdef Py_ssize_t widths[16]
    cdef Py_ssize_t outers[16]
    cdef Py_ssize_t inners[16]
    cdef Py_ssize_t ns[16]
    cdef cnp.ndarray[double, ndim=2] bview
    if d > 16:
        raise ValueError("at most 16 dimensions")
    for ax in range(d):
        bview = bands_c[ax]
        band_ptrs[ax] = &bview[0, 0]
        widths[ax] = bview.shape[0]
        ns[ax] = shape[ax]
        outers[ax] = int(np.prod(shape[:ax], dtype=np.int64))
        inners[ax] = int(np.prod(shape[ax + 1:], dtype=np.int64))
    cdef double s = 0.0
    cdef double* a
    cdef double* bptr
    cdef double* swap
    cdef const double* m
    cdef bint dead
    for s_idx in range(S):
        s += cur[s_idx]
    dead = s <= 0.0
    if not dead:
        for s_idx in range(S):
            cur[s_idx] /= s
    if store:
        stored[0, :] = cur
    a = &cur[0]
    bptr = &tmp[0]
    with nogil:
        for k in range(n_steps):
            if dead:
                inc[k] = -INFINITY
                if store:
                    for s_idx in range(S):
                        stored[k + 1, s_idx] = 0.0
                continue
            for ax in range(d):
                _apply_axis(a, bptr, band_ptrs[ax], outers[ax], ns[ax], inners[ax], widths[ax])
                swap = a
                a = bptr
                bptr = swap
            m = &mult_c[0 if single else k, 0]
            s = 0.0
            if has_mask:
                for s_idx in range(S):
                    a[s_idx] = a[s_idx] * m[s_idx] * mask_c[k, s_idx]
                    s += a[s_idx]
            else:
                for s_idx in range(S):
                    a[s_idx] = a[s_idx] * m[s_idx]
                    s += a[s_idx]
            if s > 0.0:
                for s_idx in range(S):
                    a[s_idx] /= s
                inc[k] = log(s)
            else:
                dead = True
                for s_idx in range(S):
                    a[s_idx] = 0.0
                inc[k] = -INFINITY
            if store:
                for s_idx in range(S):
                    stored[k + 1, s_idx] = a[s_idx]
    cdef bint in_cur = a == &cur[0]
    final = np.array(cur) if in_cur else np.array(tmp)
    return inc, final, (stored if store else None)


def backward_sample(bands, shape, stored_in, uniforms_in):
    cdef Py_ssize_t d = len(shape)
    cdef cnp.ndarray[double, ndim=2] stored = np.ascontiguousarray(stored_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] uniforms = np.ascontiguousarray(uniforms_in, dtype=np.float64)
    cdef Py_ssize_t n_steps = stored.shape[0] - 1
    cdef Py_ssize_t S = stored.shape[1]
    cdef Py_ssize_t count = uniforms.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] paths = np.empty((count, n_steps + 1), dtype=np.int64)
    if count == 0:
        return paths
    bands_c = [np.ascontiguousarray(bd, dtype=np.float64) for bd in bands]
    cdef Py_ssize_t width = bands_c[0].shape[1]
    cdef Py_ssize_t b = (width - 1) // 2
    cdef Py_ssize_t ncand = width ** d
    cdef double* band_ptrs[16]
    cdef Py_ssize_t dims[16]
    cdef Py_ssize_t strides[16]
    cdef Py_ssize_t ycoord[16]
    cdef Py_ssize_t digit[16]
    cdef cnp.ndarray[double, ndim=2] bview
    cdef Py_ssize_t ax, p, k, c, x, xa, flat, rem, chosen, last_pos
    cdef double total, target, acc, pr
    cdef cnp.ndarray[double, ndim=1] probs = np.empty(ncand)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cand = np.empty(ncand, dtype=np.int64)
    cdef bint ok
    if d > 16:
        raise ValueError("at most 16 dimensions")
    for ax in range(d):
        bview = bands_c[ax]
        band_ptrs[ax] = &bview[0, 0]
        dims[ax] = shape[ax]
    strides[d - 1] = 1
    for ax in range(d - 2, -1, -1):
        strides[ax] = strides[ax + 1] * dims[ax + 1]
    with nogil:
        total = 0.0
        last_pos = 0
        for x in range(S):
            total += stored[n_steps, x]
            if stored[n_steps, x] > 0.0:
                last_pos = x
        for p in range(count):
            target = uniforms[p, n_steps] * total
            acc = 0.0
            chosen = last_pos
            for x in range(S):
                acc += stored[n_steps, x]
                if acc > target and stored[n_steps, x] > 0.0:
                    chosen = x
                    break
            paths[p, n_steps] = chosen
            for k in range(n_steps - 1, -1, -1):
                rem = paths[p, k + 1]
                for ax in range(d):
                    ycoord[ax] = rem // strides[ax]
                    rem = rem - ycoord[ax] * strides[ax]
                acc = 0.0
                last_pos = -1
                for c in range(ncand):
                    rem = c
                    pr = 1.0
                    flat = 0
                    ok = True
                    for ax in range(d - 1, -1, -1):
                        digit[ax] = rem % width
                        rem = rem // width
                    for ax in range(d):
                        xa = ycoord[ax] + digit[ax] - b
                        if xa < 0 or xa >= dims[ax]:
                            ok = False
                            break
                        pr *= band_ptrs[ax][ycoord[ax] * width + digit[ax]]
                        flat += xa * strides[ax]
                    if ok:
                        pr *= stored[k, flat]
                    else:
                        pr = 0.0
                        flat = 0
                    acc += pr
                    probs[c] = acc
                    cand[c] = flat
                    if pr > 0.0:
                        last_pos = c
                target = uniforms[p, k] * acc
                chosen = last_pos
                for c in range(ncand):
                    if probs[c] > target:
                        if c <= last_pos:
                            chosen = c
                        break
                paths[p, k] = cand[chosen]
    return paths
