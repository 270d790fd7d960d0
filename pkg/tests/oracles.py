"""Independent reference implementations used by the tests.

These are deliberately naive: loops, dense inverses and exhaustive
enumeration.  Nothing here imports the package under test.
"""

from itertools import combinations

import numpy as np


def vertex_lp(c, A, b, tol=1e-9):
    """Minimise ``c'x`` s.t. ``A x <= b, x >= 0`` by enumerating basic solutions.

    Returns ``(objective, x)``; ``(inf, None)`` if no vertex is feasible.
    Only meaningful when the program is bounded (true for the l1 programs
    tested here since ``c > 0``).
    """
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    m, n = A.shape
    rows = np.vstack([A, -np.eye(n)])
    rhs = np.r_[b, np.zeros(n)]
    best, arg = np.inf, None
    for act in combinations(range(m + n), n):
        M = rows[list(act)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs[list(act)])
        if np.all(rows @ x <= rhs + tol * (1 + np.abs(rhs))):
            val = float(np.dot(c, x))
            if val < best - 1e-12:
                best, arg = val, x
    return best, arg


def dantzig_vertex(G, g0, lam):
    """``min |t|_1 s.t. |G t + g0|_inf <= lam`` through :func:`vertex_lp`."""
    G = np.asarray(G, float)
    K = G.shape[1]
    A = np.block([[G, -G], [-G, G]])
    b = np.r_[lam - g0, lam + g0]
    return vertex_lp(np.ones(2 * K), A, b)


def clime_column_vertex(M, i, ell):
    M = np.asarray(M, float)
    d = M.shape[0]
    e = np.zeros(d)
    e[i] = 1.0
    A = np.block([[M, -M], [-M, M]])
    return vertex_lp(np.ones(2 * d), A, np.r_[ell + e, ell - e])


def moments_by_loops(y, x, z, B, theta):
    """``E_n[z_{j,t} (y_{j,t} - x_{j,t}' B_j theta_j)]`` with explicit loops."""
    n, p = y.shape
    out = []
    for j in range(p):
        b = B[j] @ theta[j]
        for l in range(z[j].shape[1]):
            s = 0.0
            for t in range(n):
                s += z[j][t, l] * (y[t, j] - sum(x[j][t, k] * b[k] for k in range(b.size)))
            out.append(s / n)
    return np.array(out)


def tsls(y, x, z):
    """``(X'Z (Z'Z)^{-1} Z'X)^{-1} X'Z (Z'Z)^{-1} Z'y`` with dense inverses."""
    Pz = z @ np.linalg.inv(z.T @ z) @ z.T
    return np.linalg.inv(x.T @ Pz @ x) @ (x.T @ Pz @ y)


def woodbury_direct(Pi, F):
    return np.linalg.inv(np.linalg.inv(Pi) + F)


def schur_inverse(G1, G2, U):
    """Inverse of the Schur complement ``G1'UG1 - G1'UG2 (G2'UG2)^{-1} G2'UG1``."""
    M11 = G1.T @ U @ G1
    if G2.shape[1] == 0:
        return np.linalg.inv(M11)
    M12 = G1.T @ U @ G2
    M22 = G2.T @ U @ G2
    return np.linalg.inv(M11 - M12 @ np.linalg.inv(M22) @ M12.T)


def iv_closed_form(y, x, z):
    """``(Z'X)^{-1} Z'y`` for an exactly identified system."""
    return np.linalg.solve(z.T @ x, z.T @ y)


def sparse_sv_brute(G, m):
    """Independent enumeration over every ``|I| <= m`` and ``|H| <= m``.

    ``sigma_min(m)``: min over ``I`` of the best ``sigma_{|I|}(G[H, I])`` over
    ``|H| >= |I|``; ``sigma_max(m)``: max over all pairs of the top singular
    value.
    """
    G = np.asarray(G, float)
    q, K = G.shape
    smin, smax = np.inf, 0.0
    for a in range(1, m + 1):
        for I in combinations(range(K), a):
            best = 0.0
            for h in range(1, m + 1):
                for H in combinations(range(q), h):
                    sub = G[np.ix_(H, I)]
                    sv = np.linalg.svd(sub, compute_uv=False)
                    smax = max(smax, sv[0])
                    if h >= a:
                        best = max(best, sv[a - 1])
            smin = min(smin, best)
    return smin, smax
