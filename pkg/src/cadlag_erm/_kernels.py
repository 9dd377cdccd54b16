"""Numba kernels for two-dimensional dominance sums (Fenwick-tree sweeps)."""

import numpy as np
from numba import njit


@njit(cache=True)
def _bit_add(tree, pos, val):
    n = tree.shape[0] - 1
    while pos <= n:
        tree[pos] += val
        pos += pos & (-pos)


@njit(cache=True)
def _bit_prefix(tree, pos):
    s = 0.0
    while pos > 0:
        s += tree[pos]
        pos -= pos & (-pos)
    return s


@njit(cache=True)
def dominance_matvec(knot_a, knot_rb, coef, pt_order, pt_x, pt_qb, nb, out):
    """out[i] = sum of coef[j] over knots with a_j <= x_i and b_j <= y_i.

    Knots must be sorted by ``a``; ``pt_order`` sorts points by ``x``.
    ``knot_rb`` is the 0-based rank of b_j among the distinct b values and
    ``pt_qb`` the number of distinct b values <= y_i.
    """
    tree = np.zeros(nb + 1)
    j = 0
    k = knot_a.shape[0]
    for t in range(pt_order.shape[0]):
        i = pt_order[t]
        x = pt_x[i]
        while j < k and knot_a[j] <= x:
            _bit_add(tree, knot_rb[j] + 1, coef[j])
            j += 1
        out[i] = _bit_prefix(tree, pt_qb[i])


@njit(cache=True)
def dominance_rmatvec(knot_a, knot_rb, r, pt_order, pt_x, pt_qb, nb, out):
    """out[j] = sum of r[i] over points with x_i >= a_j and y_i >= b_j."""
    tree = np.zeros(nb + 1)
    total = 0.0
    m = pt_order.shape[0]
    t = m - 1
    for j in range(knot_a.shape[0] - 1, -1, -1):
        a = knot_a[j]
        while t >= 0 and pt_x[pt_order[t]] >= a:
            i = pt_order[t]
            q = pt_qb[i]
            if q > 0:
                _bit_add(tree, q, r[i])
                total += r[i]
            t -= 1
        out[j] = total - _bit_prefix(tree, knot_rb[j])
