"""Independent brute-force oracles shared by unit and acceptance tests."""

import itertools

import numpy as np


def staircase_dp(x, y, loss, radius, h=0.01):
    """Best objective over 1-d step functions with fitted values on a grid of spacing h.

    The fit is determined by its values v_1..v_k at the sorted distinct x's;
    its variation norm is |v_1| + sum |v_g - v_{g-1}| (the intercept can
    always be absorbed).  Values live on h*Z and the budget is counted in
    units of h, so every grid candidate is feasible and the result is an
    upper bound on the true optimum.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    levels = np.unique(x)
    B = int(np.floor(radius / h + 1e-9))
    vals = h * np.arange(-B, B + 1)
    V = vals.size
    costs = []
    for xv in levels:
        yy = y[x == xv]
        costs.append(np.array([loss.value(v, yy).sum() / n for v in vals]))
    inf = np.inf
    # best[v, b]: minimal cost with current value index v and budget used b
    best = np.full((V, B + 1), inf)
    for vi in range(V):
        used = abs(vi - B)
        if used <= B:
            best[vi, used] = costs[0][vi]
    for c in costs[1:]:
        new = np.full((V, B + 1), inf)
        for delta in range(0, B + 1):
            cand = best[:, : B + 1 - delta]
            # move up by delta or down by delta
            if delta == 0:
                new[:, delta:] = np.minimum(new[:, delta:], cand)
                continue
            new[delta:, delta:] = np.minimum(new[delta:, delta:], cand[:-delta])
            new[:-delta, delta:] = np.minimum(new[:-delta, delta:], cand[delta:])
        best = new + c[:, None]
    return float(best.min())


def coefficient_enumeration(x, y, loss, radius, h=0.05):
    """Enumerate (intercept, coefficients) on an h-grid inside the l1 ball (k <= 3)."""
    x = np.asarray(x, dtype=float).ravel()
    knots = np.unique(x[x > 0])
    A = np.column_stack([np.ones_like(x)] + [(x >= k).astype(float) for k in knots])
    B = int(np.floor(radius / h + 1e-9))
    grid = h * np.arange(-B, B + 1)
    W = np.array(list(itertools.product(grid, repeat=A.shape[1])))
    W = W[np.abs(W).sum(axis=1) <= radius + 1e-12]
    U = A @ W.T
    return float(np.min(np.mean(loss.value(U, y[:, None]), axis=0)))


def tiny_instance(rng, family, n=50):
    k = int(rng.integers(2, 7))
    xs = np.sort(rng.choice(np.arange(1, 100), k, replace=False)) / 100.0
    X = rng.choice(xs, n)[:, None]
    step = np.where(X[:, 0] >= np.median(xs), 1.0, -0.5)
    if family == "logistic":
        Y = (rng.uniform(size=n) < 1 / (1 + np.exp(-2 * step))).astype(float)
    else:
        Y = step + rng.normal(scale=0.5, size=n)
    radius = float(rng.uniform(0.3, 3.0))
    return X, Y, radius
