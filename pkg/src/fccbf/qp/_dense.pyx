# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense dual active-set kernel.

Mirrors ``_dense_py.solve_dense`` operation for operation (same loop order, same
accumulation order) so the two backends produce identical doubles. Active
constraints stay linearly independent, so at most ``n`` are held at once.
"""
from libc.math cimport sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, free

OPTIMAL = 0
INFEASIBLE = 1
MAX_ITER = 2
NOT_PD = 3

cdef double FEAS_TOL = 1e-12
cdef double DEP_TOL = 1e-10


cdef bint _cholesky(const double* G, int n, double* L) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(n * n):
        L[i] = 0.0
    for i in range(n):
        for j in range(i + 1):
            s = G[i * n + j]
            for k in range(j):
                s -= L[i * n + k] * L[j * n + k]
            if i == j:
                if not s > 0.0:
                    return False
                L[i * n + i] = sqrt(s)
            else:
                L[i * n + j] = s / L[j * n + j]
    return True


cdef void _forward(const double* L, int n, const double* v, double* y) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = v[i]
        for k in range(i):
            s -= L[i * n + k] * y[k]
        y[i] = s / L[i * n + i]


cdef void _backward_t(const double* L, int n, const double* v, double* y) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(n - 1, -1, -1):
        s = v[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * y[k]
        y[i] = s / L[i * n + i]


cdef void _project(const double* Q, int nq, int n, const double* d,
                   double* coeffs, double* w) noexcept nogil:
    # Q holds nq orthonormal columns, column k at Q[k*n : (k+1)*n]
    cdef int it, k, i
    cdef double c
    for i in range(n):
        w[i] = d[i]
    for k in range(nq):
        coeffs[k] = 0.0
    for it in range(2):
        for k in range(nq):
            c = 0.0
            for i in range(n):
                c += Q[k * n + i] * w[i]
            coeffs[k] += c
            for i in range(n):
                w[i] -= c * Q[k * n + i]


cdef double _norm(const double* w, int n) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    for i in range(n):
        s += w[i] * w[i]
    return sqrt(s)


cdef bint _rebuild(const double* D, int k, int n, double* Q, double* R,
                   double* coeffs, double* w) noexcept nogil:
    # R column j at R[j*n : j*n + j + 1]
    cdef int j, i
    cdef double nw
    for j in range(k):
        _project(Q, j, n, &D[j * n], coeffs, w)
        nw = _norm(w, n)
        if not nw > DEP_TOL * _norm(&D[j * n], n):
            return False
        for i in range(n):
            Q[j * n + i] = w[i] / nw
        for i in range(j):
            R[j * n + i] = coeffs[i]
        R[j * n + j] = nw
    return True


cdef void _solve_upper(const double* R, int k, int n, const double* v, double* y) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(k - 1, -1, -1):
        s = v[i]
        for j in range(i + 1, k):
            s -= R[j * n + i] * y[j]
        y[i] = s / R[i * n + i]


cdef void _solve_lower_t(const double* R, int k, int n, const double* v, double* y) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(k):
        s = v[i]
        for j in range(i):
            s -= R[i * n + j] * y[j]
        y[i] = s / R[i * n + i]


cdef double _slack(const double* A, const double* b, int n, int j, const double* x) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    cdef int base = j * n
    for i in range(n):
        s += A[base + i] * x[i]
    return s - b[j]


cdef bint _is_violated(double s, double bj) noexcept nogil:
    return s < -FEAS_TOL * (1.0 + fabs(bj))


cdef class _Work:
    cdef double* buf
    cdef double *L
    cdef double *Q
    cdef double *R
    cdef double *D
    cdef double *x
    cdef double *lam
    cdef double *coeffs
    cdef double *w
    cdef double *z
    cdef double *r
    cdef double *d_p
    cdef double *t
    cdef int* active

    def __cinit__(self, int n):
        cdef int nn = n * n
        cdef int i
        self.buf = <double*> malloc((5 * nn + 9 * n + 1) * sizeof(double))
        self.active = <int*> malloc((n + 1) * sizeof(int))
        if self.buf == NULL or self.active == NULL:
            raise MemoryError()
        self.L = self.buf
        self.Q = self.L + nn
        self.R = self.Q + nn
        self.D = self.R + nn
        self.x = self.D + nn
        self.lam = self.x + n
        self.coeffs = self.lam + n + 1
        self.w = self.coeffs + n
        self.z = self.w + n
        self.r = self.z + n
        self.d_p = self.r + n
        self.t = self.d_p + n
        # the tail after t is scratch for the warm-start check
        for i in range(5 * nn + 9 * n + 1):
            self.buf[i] = 0.0

    def __dealloc__(self):
        free(self.buf)
        free(self.active)


cdef bint _try_warm(_Work ws, const double* A, const double* b, int n, int m,
                    list warm):
    cdef int k = len(warm)
    cdef int c, i, j
    cdef double* y = ws.t + n
    if k > n:
        return False
    for c in range(k):
        j = warm[c]
        _forward(ws.L, n, &A[j * n], &ws.D[c * n])
    if not _rebuild(ws.D, k, n, ws.Q, ws.R, ws.coeffs, ws.w):
        return False
    for c in range(k):
        ws.coeffs[c] = b[<int> warm[c]]
    _solve_lower_t(ws.R, k, n, ws.coeffs, ws.t)
    _solve_upper(ws.R, k, n, ws.t, ws.lam)
    for c in range(k):
        if ws.lam[c] < 0.0:
            return False
    for i in range(n):
        y[i] = 0.0
    for c in range(k):
        for i in range(n):
            y[i] += ws.Q[c * n + i] * ws.t[c]
    _backward_t(ws.L, n, y, ws.x)
    for j in range(m):
        if _is_violated(_slack(A, b, n, j, ws.x), b[j]):
            return False
    return True


def solve_dense(const double[::1] G, const double[::1] A, const double[::1] b,
                int n, int m, warm=(), int max_iter=200):
    """Return ``(status, x, active, multipliers, iterations)``; see ``_dense_py``."""
    cdef _Work ws = _Work(n)
    cdef const double* Ap = &A[0] if m > 0 else NULL
    cdef const double* bp = &b[0] if m > 0 else NULL
    cdef int i, j, c, k, p, drop, iters
    cdef double s, score, worst, nr, nw, t1, t2, t, ratio, lam_p
    cdef bint full_ok, in_active
    cdef list wl

    if not _cholesky(&G[0], n, ws.L):
        return NOT_PD, [0.0] * n, [], [], 0

    if warm:
        wl = list(warm)
        if _try_warm(ws, Ap, bp, n, m, wl):
            return (OPTIMAL, [ws.x[i] for i in range(n)], wl,
                    [ws.lam[c] for c in range(len(wl))], 0)

    for i in range(n):
        ws.x[i] = 0.0
    k = 0
    iters = 0
    while True:
        p = -1
        worst = 0.0
        for j in range(m):
            in_active = False
            for c in range(k):
                if ws.active[c] == j:
                    in_active = True
                    break
            if in_active:
                continue
            s = _slack(Ap, bp, n, j, ws.x)
            if _is_violated(s, bp[j]):
                nr = _norm(&Ap[j * n], n)
                score = s / nr if nr > 0.0 else -INFINITY
                if p < 0 or score < worst:
                    p = j
                    worst = score
        if p < 0:
            return (OPTIMAL, [ws.x[i] for i in range(n)],
                    [ws.active[c] for c in range(k)], [ws.lam[c] for c in range(k)], iters)

        _forward(ws.L, n, &Ap[p * n], ws.d_p)
        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return (MAX_ITER, [ws.x[i] for i in range(n)],
                        [ws.active[c] for c in range(k)], [ws.lam[c] for c in range(k)], iters)
            _project(ws.Q, k, n, ws.d_p, ws.coeffs, ws.w)
            _solve_upper(ws.R, k, n, ws.coeffs, ws.r)
            _backward_t(ws.L, n, ws.w, ws.z)
            nw = _norm(ws.w, n)
            full_ok = nw > DEP_TOL * _norm(ws.d_p, n)

            t1 = INFINITY
            drop = -1
            for c in range(k):
                if ws.r[c] > 0.0:
                    ratio = ws.lam[c] / ws.r[c]
                    if ratio < t1:
                        t1 = ratio
                        drop = c
            t2 = INFINITY
            if full_ok:
                t2 = -_slack(Ap, bp, n, p, ws.x) / (nw * nw)

            if t1 == INFINITY and t2 == INFINITY:
                return (INFEASIBLE, [ws.x[i] for i in range(n)],
                        [ws.active[c] for c in range(k)], [ws.lam[c] for c in range(k)], iters)

            if t2 <= t1:
                t = t2
                for i in range(n):
                    ws.x[i] += t * ws.z[i]
                for c in range(k):
                    ws.lam[c] -= t * ws.r[c]
                lam_p += t
                ws.active[k] = p
                ws.lam[k] = lam_p
                for i in range(n):
                    ws.D[k * n + i] = ws.d_p[i]
                    ws.Q[k * n + i] = ws.w[i] / nw
                for i in range(k):
                    ws.R[k * n + i] = ws.coeffs[i]
                ws.R[k * n + k] = nw
                k += 1
                break

            t = t1
            if full_ok:
                for i in range(n):
                    ws.x[i] += t * ws.z[i]
            for c in range(k):
                ws.lam[c] -= t * ws.r[c]
            lam_p += t
            for c in range(drop, k - 1):
                ws.active[c] = ws.active[c + 1]
                ws.lam[c] = ws.lam[c + 1]
                for i in range(n):
                    ws.D[c * n + i] = ws.D[(c + 1) * n + i]
            k -= 1
            if not _rebuild(ws.D, k, n, ws.Q, ws.R, ws.coeffs, ws.w):
                return (MAX_ITER, [ws.x[i] for i in range(n)],
                        [ws.active[c] for c in range(k)], [ws.lam[c] for c in range(k)], iters)
