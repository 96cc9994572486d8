# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled truncated-signature kernels over batches of increment sequences.

Levels 1..depth are stored back to back in one flat buffer per path; level k
occupies ``d**k`` row-major entries.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _update(double* S, const double* inc, Py_ssize_t d, int depth,
                  const Py_ssize_t* offsets, const Py_ssize_t* sizes,
                  double* powers, bint exact) noexcept nogil:
    # powers[j] holds inc^{(x)j}/j! (exact) in the level-j layout; powers level 0 is 1
    cdef Py_ssize_t k, j, a, b, n_lo, n_hi
    cdef double* lo
    cdef double* hi
    cdef double* dst
    cdef double s
    if exact:
        for a in range(d):
            powers[offsets[1] + a] = inc[a]
        for j in range(2, depth + 1):
            n_lo = sizes[j - 1]
            lo = powers + offsets[j - 1]
            dst = powers + offsets[j]
            for a in range(n_lo):
                s = lo[a] / j
                for b in range(d):
                    dst[a * d + b] = s * inc[b]
    # top-down so every read of a lower level sees the pre-update value
    for k in range(depth, 0, -1):
        dst = S + offsets[k]
        if exact:
            for j in range(1, k + 1):
                hi = powers + offsets[j]
                n_hi = sizes[j]
                if j == k:
                    for b in range(n_hi):
                        dst[b] += hi[b]
                else:
                    lo = S + offsets[k - j]
                    n_lo = sizes[k - j]
                    for a in range(n_lo):
                        s = lo[a]
                        for b in range(n_hi):
                            dst[a * n_hi + b] += s * hi[b]
        else:
            if k == 1:
                for b in range(d):
                    dst[b] += inc[b]
            else:
                lo = S + offsets[k - 1]
                n_lo = sizes[k - 1]
                for a in range(n_lo):
                    s = lo[a]
                    for b in range(d):
                        dst[a * d + b] += s * inc[b]


def batch_levels(cnp.ndarray increments, int depth, bint exact):
    """``(B, m, d)`` increments to ``(B, sum_k d**k)`` flattened levels 1..depth."""
    cdef double[:, :, ::1] inc = np.ascontiguousarray(increments, dtype=np.float64)
    cdef Py_ssize_t B = inc.shape[0], m = inc.shape[1], d = inc.shape[2]
    cdef Py_ssize_t total = 0, k, p, i
    offsets_arr = np.zeros(depth + 2, dtype=np.intp)
    sizes_arr = np.zeros(depth + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] offsets = offsets_arr
    cdef Py_ssize_t[::1] sizes = sizes_arr
    # level 0 is a dummy slot at offset 0 so level k starts at offsets[k]
    sizes[0] = 1
    offsets[0] = 0
    total = 1
    for k in range(1, depth + 1):
        sizes[k] = sizes[k - 1] * d
        offsets[k] = total
        total += sizes[k]
    out_arr = np.zeros((B, total), dtype=np.float64)
    powers_arr = np.zeros(total, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] powers = powers_arr
    if depth < 1 or m == 0:
        return out_arr[:, 1:]
    with nogil:
        for p in range(B):
            out[p, 0] = 1.0
            for i in range(m):
                _update(&out[p, 0], &inc[p, i, 0], d, depth, &offsets[0], &sizes[0],
                        &powers[0], exact)
    return out_arr[:, 1:]
