"""Compiled inner loops for the Volterra convolution.

All dot products over the increment index go through :func:`_row_dot`; its
eight-accumulator order is the engine's canonical summation order.  Both the
path simulation and the reconstruction identity use these functions, which is
what makes reconstruct(simulate(...)) reproduce X bitwise: identical inputs
flow through identical machine code in the same order, regardless of how many
paths share a call.
"""
from numba import njit

# time-axis block width for the history/triangle split; a fixed module
# constant so that every consumer splits sums at the same points
BLOCK = 64


@njit(cache=True)
def _row_dot(w_row, inc_row, j_lo, j_hi):
    """sum_{j in [j_lo, j_hi)} w_row[j] * inc_row[j] in the canonical order."""
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    s5 = 0.0
    s6 = 0.0
    s7 = 0.0
    j = j_lo
    while j + 8 <= j_hi:
        s0 += w_row[j] * inc_row[j]
        s1 += w_row[j + 1] * inc_row[j + 1]
        s2 += w_row[j + 2] * inc_row[j + 2]
        s3 += w_row[j + 3] * inc_row[j + 3]
        s4 += w_row[j + 4] * inc_row[j + 4]
        s5 += w_row[j + 5] * inc_row[j + 5]
        s6 += w_row[j + 6] * inc_row[j + 6]
        s7 += w_row[j + 7] * inc_row[j + 7]
        j += 8
    while j < j_hi:
        s0 += w_row[j] * inc_row[j]
        j += 1
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))


@njit(cache=True)
def hist_block(W, inc, j_hi, i_lo, i_hi, out):
    """History sums: out[p, i - i_lo] = sum_{j < j_hi} W[i, j] inc[p, j]."""
    n_paths = inc.shape[0]
    for p in range(n_paths):
        inc_row = inc[p]
        for i in range(i_lo, i_hi):
            out[p, i - i_lo] = _row_dot(W[i], inc_row, 0, j_hi)


@njit(cache=True)
def tri_col(W, inc, j_lo, i, out):
    """Within-block sums: out[p] = sum_{j in [j_lo, i)} W[i, j] inc[p, j]."""
    n_paths = inc.shape[0]
    w_row = W[i]
    for p in range(n_paths):
        out[p] = _row_dot(w_row, inc[p], j_lo, i)
