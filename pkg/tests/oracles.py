"""Reference computations written independently of the package internals.

Nothing here imports the solver, the barrier builders or the design module;
only numpy and closed forms.
"""
import itertools
import math

import numpy as np


def qp_enumerate(H, A, b, tol=1e-9):
    """Minimize ``u'Hu`` subject to ``A u >= b`` by trying every active set.

    For each subset S with independent rows, the equality-constrained minimizer
    is ``u = H^-1 A_S' (A_S H^-1 A_S')^-1 b_S``. The best feasible candidate is
    the optimum (strict convexity). Returns ``None`` when nothing is feasible.
    """
    H = np.asarray(H, float)
    A = np.asarray(A, float).reshape(-1, H.shape[0])
    b = np.asarray(b, float)
    n = H.shape[0]
    Hinv = np.linalg.inv(H)
    best, best_obj = None, math.inf
    for size in range(0, min(n, len(b)) + 1):
        for S in itertools.combinations(range(len(b)), size):
            if size == 0:
                u = np.zeros(n)
            else:
                As = A[list(S)]
                M = As @ Hinv @ As.T
                if np.linalg.matrix_rank(M) < size:
                    continue
                u = Hinv @ As.T @ np.linalg.solve(M, b[list(S)])
            if np.all(A @ u >= b - tol * (1 + np.abs(b))):
                obj = float(u @ H @ u)
                if obj < best_obj - 1e-15:
                    best, best_obj = u, obj
    return best


def box_rows(lo, hi):
    """Bound faces as ``A u >= b`` rows."""
    rows, rhs = [], []
    for j, (l, h) in enumerate(zip(lo, hi)):
        e = np.zeros(len(lo))
        e[j] = 1.0
        rows.append(e.copy())
        rhs.append(l)
        rows.append(-e)
        rhs.append(-h)
    return np.array(rows), np.array(rhs)


def disk_goal_k_interval(center, radius, r, t_f, x0, u_max):
    """k-interval for ``h = R^2 - |p - c|^2`` on a single integrator with ``|u_j| <= u_max_j``.

    ``k_min = ln((r - h0)/r)/t_f``; the actuation term is ``sum_j |dh/dp_j| u_max_j``
    because the box is symmetric and the drift is zero.
    """
    d = np.asarray(x0, float) - np.asarray(center, float)
    h0 = radius**2 - float(d @ d)
    k_min = math.log((r - h0) / r) / t_f
    reach = float(np.sum(np.abs(2.0 * d) * np.asarray(u_max, float)))
    return k_min, reach / (r - h0)


def hocbf_floor_row(x, v, a1, a2, limit=0.0):
    """Second-order floor barrier ``b = x - limit`` on ``xdd = u``, linear gains.

    psi1 = v + a1 (x - limit); psi2 = u + a1 v + a2 psi1 >= 0.
    """
    return 1.0, (a1 + a2) * v + a1 * a2 * (x - limit)


def rk4_polynomial_step(x, v, u, dt):
    """Exact ZOH step of the double integrator (RK4 is exact for this quadratic)."""
    return x + v * dt + 0.5 * u * dt * dt, v + u * dt


def exp_envelope(V0, k, t):
    return V0 * math.exp(-k * t)
