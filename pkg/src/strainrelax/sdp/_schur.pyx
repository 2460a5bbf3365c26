# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Schur-complement accumulation kernel.

Same contract as _schur_py.schur_accumulate: for one PSD block, add
H[k, l] += <B_k, Wm @ B_l @ Wm> for all variable pairs touching the block.
The per-column products Wm @ B_l @ Wm go through BLAS dgemm; the gather
against all B_k runs as a CSR contraction with a chunk-contiguous inner loop.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

BACKEND = "compiled"


def schur_accumulate(double[:, ::1] H, double[:, ::1] Wm,
                     long[::1] cols, long[::1] col_offsets,
                     long[::1] a_idx, long[::1] b_idx, double[::1] vals,
                     gather, int chunk=48):
    cdef int side = Wm.shape[0]
    cdef long m = H.shape[0]
    cdef int ncols = <int> cols.shape[0]
    cdef int start, stop, cn, t, i, e, qn, qmax
    cdef long lo, hi, k, p, ee
    cdef double alpha = 1.0, beta = 0.0
    cdef char no = b'N'
    cdef double acc

    gather_csr = gather.tocsr()
    indptr_arr = np.asarray(gather_csr.indptr, dtype=np.int64)
    indices_arr = np.asarray(gather_csr.indices, dtype=np.int64)
    cdef long[::1] g_indptr = indptr_arr
    cdef long[::1] g_indices = indices_arr
    cdef double[::1] g_data = gather_csr.data

    qmax = 1
    for t in range(ncols):
        qn = <int> (col_offsets[t + 1] - col_offsets[t])
        if qn > qmax:
            qmax = qn

    tbuf = np.empty((side, qmax), dtype=np.float64)
    bbuf = np.empty((qmax, side), dtype=np.float64)
    ubuf = np.empty((chunk, side * side), dtype=np.float64)
    cdef double[:, ::1] T = tbuf
    cdef double[:, ::1] B = bbuf
    cdef double[:, ::1] U = ubuf
    cdef double *t_ptr = &T[0, 0]
    cdef double *b_ptr = &B[0, 0]
    cdef double *u_ptr

    for start in range(0, ncols, chunk):
        stop = start + chunk
        if stop > ncols:
            stop = ncols
        cn = stop - start
        # U[t] = vec(Wm @ B_l @ Wm), exploiting the sparsity of B_l:
        # T[:, e] = Wm[:, a_e] * v_e and B[e, :] = Wm[b_e, :], then T @ B.
        for t in range(cn):
            lo = col_offsets[start + t]
            hi = col_offsets[start + t + 1]
            qn = <int> (hi - lo)
            for e in range(qn):
                p = a_idx[lo + e]
                acc = vals[lo + e]
                for i in range(side):
                    T[i, e] = Wm[i, p] * acc
                p = b_idx[lo + e]
                for i in range(side):
                    B[e, i] = Wm[p, i]
            u_ptr = &U[t, 0]
            # Row-major T(side x qn, ld qmax) and B(qn x side, ld side) seen
            # column-major are T^T and B^T; computing B^T @ T^T column-major
            # lands T @ B in the row-major U slot.
            dgemm(&no, &no, &side, &side, &qn, &alpha, b_ptr, &side,
                  t_ptr, &qmax, &beta, u_ptr, &side)
        # H[k, cols[start+t]] += sum_e g_data[e] * U[t, g_indices[e]]
        # t stays outer so the 8*side^2 bytes of U[t] remain cache resident
        # while the CSR arrays stream sequentially.
        for t in range(cn):
            col_l = cols[start + t]
            for k in range(m):
                lo = g_indptr[k]
                hi = g_indptr[k + 1]
                if lo == hi:
                    continue
                acc = 0.0
                for ee in range(lo, hi):
                    acc += g_data[ee] * U[t, g_indices[ee]]
                H[k, col_l] += acc
