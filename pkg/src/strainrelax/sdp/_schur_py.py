"""NumPy fallback for the Schur-complement accumulation kernel.

For one PSD block with scaling weight Wm (symmetric positive definite) the
kernel adds, for every pair of variables (k, l) touching the block,

    H[k, l] += < B_k, Wm @ B_l @ Wm >

where B_k is the sparse symmetric coefficient matrix of variable k.  Columns
are processed in chunks: each Wm @ B_l @ Wm is two small GEMMs exploiting the
sparsity of B_l, and the contraction against all B_k is one sparse gather
product per chunk.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def schur_accumulate(H, Wm, cols, col_offsets, a_idx, b_idx, vals, gather,
                     chunk: int = 16) -> None:
    """Add one block's contribution to the Schur complement H (in place).

    The chunk is kept small so the gather product streams a cache-resident
    slab of U.
    """
    side = Wm.shape[0]
    ncols = len(cols)
    for start in range(0, ncols, chunk):
        stop = min(start + chunk, ncols)
        cn = stop - start
        U = np.empty((cn, side * side))
        for t in range(cn):
            lo = col_offsets[start + t]
            hi = col_offsets[start + t + 1]
            T = Wm[:, a_idx[lo:hi]] * vals[lo:hi]
            U[t] = (T @ Wm[b_idx[lo:hi], :]).ravel()
        # H[:, cols_chunk] += gather @ U^T   (gather is (m, side^2) csr)
        H[:, cols[start:stop]] += gather @ U.T
