"""Pure-Python dense dual active-set kernel.

Solves ``min 1/2 x'Gx  s.t.  a_j . x >= b_j`` for small dense problems with the
Goldfarb-Idnani method. The unconstrained minimizer is the origin (no linear
term), so the dual iteration starts from a known optimum and adds violated rows
one at a time; an empty feasible region is detected exactly when a violated row
cannot be added.

Every arithmetic step is mirrored in ``_dense.pyx`` in the same order so both
backends round identically.
"""
import math

OPTIMAL = 0
INFEASIBLE = 1
MAX_ITER = 2
NOT_PD = 3

FEAS_TOL = 1e-12
DEP_TOL = 1e-10


def _cholesky(G, n):
    L = [0.0] * (n * n)
    for i in range(n):
        for j in range(i + 1):
            s = G[i * n + j]
            for k in range(j):
                s -= L[i * n + k] * L[j * n + k]
            if i == j:
                if not s > 0.0:
                    return None
                L[i * n + i] = math.sqrt(s)
            else:
                L[i * n + j] = s / L[j * n + j]
    return L


def _forward(L, n, v):
    # L y = v
    y = [0.0] * n
    for i in range(n):
        s = v[i]
        for k in range(i):
            s -= L[i * n + k] * y[k]
        y[i] = s / L[i * n + i]
    return y


def _backward_t(L, n, v):
    # L' y = v
    y = [0.0] * n
    for i in range(n - 1, -1, -1):
        s = v[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * y[k]
        y[i] = s / L[i * n + i]
    return y


def _project(Q, nq, n, d):
    """Split ``d`` against the orthonormal columns ``Q`` (two Gram-Schmidt passes).

    Returns ``(coeffs, w)`` with ``d = Q coeffs + w`` and ``w`` orthogonal to Q.
    """
    w = list(d)
    coeffs = [0.0] * nq
    for _ in range(2):
        for k in range(nq):
            qk = Q[k]
            c = 0.0
            for i in range(n):
                c += qk[i] * w[i]
            coeffs[k] += c
            for i in range(n):
                w[i] -= c * qk[i]
    return coeffs, w


def _norm(w, n):
    s = 0.0
    for i in range(n):
        s += w[i] * w[i]
    return math.sqrt(s)


def _rebuild(D, n):
    """Orthonormal basis and upper-triangular factor of the columns ``D``.

    Returns ``None`` when a column is numerically dependent on the earlier ones.
    """
    Q = []
    R = []
    for d in D:
        coeffs, w = _project(Q, len(Q), n, d)
        nw = _norm(w, n)
        if not nw > DEP_TOL * _norm(d, n):
            return None
        Q.append([wi / nw for wi in w])
        R.append(coeffs + [nw])
    return Q, R


def _solve_upper(R, k, v):
    # R stored by columns: R[j][i] is entry (i, j), i <= j
    y = [0.0] * k
    for i in range(k - 1, -1, -1):
        s = v[i]
        for j in range(i + 1, k):
            s -= R[j][i] * y[j]
        y[i] = s / R[i][i]
    return y


def _solve_lower_t(R, k, v):
    # R' y = v
    y = [0.0] * k
    for i in range(k):
        s = v[i]
        for j in range(i):
            s -= R[i][j] * y[j]
        y[i] = s / R[i][i]
    return y


def _slack(A, b, n, j, x):
    s = 0.0
    base = j * n
    for i in range(n):
        s += A[base + i] * x[i]
    return s - b[j]


def _is_violated(s, bj):
    return s < -FEAS_TOL * (1.0 + abs(bj))


def _try_warm(L, A, b, n, m, warm):
    """KKT point of the equality problem on ``warm``, or None if it is not optimal."""
    D = []
    for j in warm:
        D.append(_forward(L, n, A[j * n:(j + 1) * n]))
    qr = _rebuild(D, n)
    if qr is None:
        return None
    Q, R = qr
    k = len(warm)
    bw = [b[j] for j in warm]
    t = _solve_lower_t(R, k, bw)
    lam = _solve_upper(R, k, t)
    for v in lam:
        if v < 0.0:
            return None
    y = [0.0] * n
    for c in range(k):
        for i in range(n):
            y[i] += Q[c][i] * t[c]
    x = _backward_t(L, n, y)
    for j in range(m):
        if _is_violated(_slack(A, b, n, j, x), b[j]):
            return None
    return x, list(warm), lam


def solve_dense(G, A, b, n, m, warm=(), max_iter=200):
    """Return ``(status, x, active, multipliers, iterations)``.

    ``G`` is the row-major ``n x n`` Hessian, ``A`` the row-major ``m x n``
    constraint matrix, ``b`` the right-hand sides. ``warm`` is a candidate
    active set checked for optimality before the cold iteration.
    """
    L = _cholesky(G, n)
    if L is None:
        return NOT_PD, [0.0] * n, [], [], 0

    if warm:
        hit = _try_warm(L, A, b, n, m, warm)
        if hit is not None:
            return OPTIMAL, hit[0], hit[1], hit[2], 0

    x = [0.0] * n
    active = []
    lam = []
    D = []
    Q = []
    R = []
    iters = 0
    while True:
        # most violated row, scaled by its norm
        p = -1
        worst = 0.0
        for j in range(m):
            if j in active:
                continue
            s = _slack(A, b, n, j, x)
            if _is_violated(s, b[j]):
                nr = _norm(A[j * n:(j + 1) * n], n)
                score = s / nr if nr > 0.0 else -math.inf
                if p < 0 or score < worst:
                    p = j
                    worst = score
        if p < 0:
            return OPTIMAL, x, active, lam, iters

        d_p = _forward(L, n, A[p * n:(p + 1) * n])
        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return MAX_ITER, x, active, lam, iters
            k = len(active)
            coeffs, w = _project(Q, k, n, d_p)
            r = _solve_upper(R, k, coeffs)
            z = _backward_t(L, n, w)
            nw = _norm(w, n)
            full_ok = nw > DEP_TOL * _norm(d_p, n)

            t1 = math.inf
            drop = -1
            for c in range(k):
                if r[c] > 0.0:
                    ratio = lam[c] / r[c]
                    if ratio < t1:
                        t1 = ratio
                        drop = c
            t2 = math.inf
            if full_ok:
                t2 = -_slack(A, b, n, p, x) / (nw * nw)

            if t1 == math.inf and t2 == math.inf:
                return INFEASIBLE, x, active, lam, iters

            if t2 <= t1:
                t = t2
                for i in range(n):
                    x[i] += t * z[i]
                for c in range(k):
                    lam[c] -= t * r[c]
                lam_p += t
                active.append(p)
                lam.append(lam_p)
                D.append(d_p)
                Q.append([wi / nw for wi in w])
                R.append(coeffs + [nw])
                break

            t = t1
            if full_ok:
                for i in range(n):
                    x[i] += t * z[i]
            for c in range(k):
                lam[c] -= t * r[c]
            lam_p += t
            del active[drop]
            del lam[drop]
            del D[drop]
            qr = _rebuild(D, n)
            if qr is None:
                return MAX_ITER, x, active, lam, iters
            Q, R = qr
