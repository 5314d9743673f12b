# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()

BACKEND = "cython"

cdef double ORTHO_TOL = 1e-9


cdef inline void cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void matvec(const double* R, const double* x, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = R[3 * i] * x[0] + R[3 * i + 1] * x[1] + R[3 * i + 2] * x[2]


cdef inline void matTvec(const double* R, const double* x, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = R[i] * x[0] + R[3 + i] * x[1] + R[6 + i] * x[2]


cdef inline void matmul(const double* A, const double* B, double* out) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef void so3_exp(const double* phi, double* out) noexcept nogil:
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double a, b, t
    cdef double K[9]
    cdef double K2[9]
    cdef int i
    if t2 < 1e-12:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        t = sqrt(t2)
        a = sin(t) / t
        b = (1.0 - cos(t)) / t2
    K[0] = 0.0;     K[1] = -phi[2]; K[2] = phi[1]
    K[3] = phi[2];  K[4] = 0.0;     K[5] = -phi[0]
    K[6] = -phi[1]; K[7] = phi[0];  K[8] = 0.0
    matmul(K, K, K2)
    for i in range(9):
        out[i] = a * K[i] + b * K2[i]
    out[0] += 1.0
    out[4] += 1.0
    out[8] += 1.0


cdef void jinv(const double* phi, const double* w, double* out) noexcept nogil:
    cdef double t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double c, t
    cdef double c1[3]
    cdef double c2[3]
    cdef int i
    cross3(phi, w, c1)
    if t2 < 1e-8:
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        t = sqrt(t2)
        c = 1.0 / t2 - (1.0 + cos(t)) / (2.0 * t * sin(t))
    cross3(phi, c1, c2)
    for i in range(3):
        out[i] = w[i] + 0.5 * c1[i] + c * c2[i]


cdef void rotate_by(const double* R, const double* phi, double* out) noexcept nogil:
    cdef double E[9]
    so3_exp(phi, E)
    matmul(R, E, out)


cdef double ortho_defect(const double* R) noexcept nogil:
    cdef double s = 0.0, e
    cdef int i, j
    for i in range(3):
        for j in range(3):
            e = R[i] * R[j] + R[3 + i] * R[3 + j] + R[6 + i] * R[6 + j]
            if i == j:
                e -= 1.0
            s += e * e
    return sqrt(s)


cdef void reortho(double* R):
    # rare path: polar projection through numpy
    if ortho_defect(R) <= ORTHO_TOL:
        return
    cdef cnp.ndarray[double, ndim=2] M = np.empty((3, 3))
    cdef int i
    for i in range(9):
        M[i // 3, i % 3] = R[i]
    U, _, Vt = np.linalg.svd(M)
    P = U @ Vt
    for i in range(9):
        R[i] = P[i // 3, i % 3]


cdef struct Gains:
    int n
    int rank
    int dense
    double k_r
    const double* kp
    const double* kv
    const double* kg
    const double* gd      # n*n row-major, or NULL
    const double* gdiag   # n
    const double* gu      # n*rank row-major
    const double* gv      # n*rank row-major
    double gk[3]


cdef void rates(const double* R, const double* p, const double* v, const double* g,
                const double* P, const double* om, const double* acc, const double* Y,
                Gains* G, double* w, double* dp, double* dv, double* dg, double* dP,
                double* Z, double* tmp) noexcept nogil:
    cdef int n = G.n
    cdef int i, j, k, c
    cdef double sigma[3]
    cdef double x[3]
    cdef double s
    cdef double sp[3]
    cdef double sv[3]
    cdef double sg[3]
    cdef double Ra[3]
    cross3(g, G.gk, sigma)
    for c in range(3):
        sigma[c] *= G.k_r

    # innovations z_j = R y_j - p + p_j
    for j in range(n):
        matvec(R, &Y[3 * j], x)
        for c in range(3):
            Z[3 * j + c] = x[c] - p[c] + P[3 * j + c]

    for c in range(3):
        sp[c] = 0.0
        sv[c] = 0.0
        sg[c] = 0.0
    for j in range(n):
        for c in range(3):
            sp[c] += G.kp[j] * Z[3 * j + c]
            sv[c] += G.kv[j] * Z[3 * j + c]
            sg[c] += G.kg[j] * Z[3 * j + c]

    cross3(sigma, p, x)
    for c in range(3):
        dp[c] = x[c] + v[c] + sp[c]
    cross3(sigma, v, x)
    matvec(R, acc, Ra)
    for c in range(3):
        dv[c] = x[c] + g[c] + Ra[c] + sv[c]
    cross3(sigma, g, x)
    for c in range(3):
        dg[c] = x[c] + sg[c]

    for i in range(n):
        cross3(sigma, &P[3 * i], &dP[3 * i])
        for c in range(3):
            dP[3 * i + c] += G.gdiag[i] * Z[3 * i + c]
    if G.dense:
        for i in range(n):
            for j in range(n):
                s = G.gd[n * i + j]
                if s != 0.0:
                    for c in range(3):
                        dP[3 * i + c] += s * Z[3 * j + c]
    if G.rank > 0:
        # tmp = gv^T Z  (rank x 3)
        for k in range(G.rank):
            for c in range(3):
                tmp[3 * k + c] = 0.0
        for j in range(n):
            for k in range(G.rank):
                s = G.gv[G.rank * j + k]
                for c in range(3):
                    tmp[3 * k + c] += s * Z[3 * j + c]
        for i in range(n):
            for k in range(G.rank):
                s = G.gu[G.rank * i + k]
                for c in range(3):
                    dP[3 * i + c] += s * tmp[3 * k + c]

    matTvec(R, sigma, x)
    for c in range(3):
        w[c] = om[c] + x[c]


cdef struct Work:
    double* Z
    double* tmp
    double* Ps      # stage landmark state
    double* dP      # 4 stage derivatives, 4*n*3


cdef int step_impl(double* R, double* p, double* v, double* g, double* P,
                   const double* om, const double* acc, const double* Y,
                   Gains* G, double h, Work* W) noexcept nogil:
    """One RKMK4 observer step in place; inputs point at 3 consecutive stage rows."""
    cdef int n = G.n
    cdef int m = 3 * n
    cdef int i, c, st
    cdef double w[3]
    cdef double th[3]
    cdef double kk[4][3]
    cdef double dps[4][3]
    cdef double dvs[4][3]
    cdef double dgs[4][3]
    cdef double ps[3]
    cdef double vs[3]
    cdef double gs[3]
    cdef double Rs[9]
    cdef double Rn[9]
    cdef double frac
    cdef int urow

    rates(R, p, v, g, P, om, acc, Y, G, kk[0], dps[0], dvs[0], dgs[0], W.dP, W.Z, W.tmp)
    for st in range(1, 4):
        frac = 0.5 * h if st < 3 else h
        urow = 1 if st < 3 else 2
        for c in range(3):
            th[c] = frac * kk[st - 1][c]
            ps[c] = p[c] + frac * dps[st - 1][c]
            vs[c] = v[c] + frac * dvs[st - 1][c]
            gs[c] = g[c] + frac * dgs[st - 1][c]
        for i in range(m):
            W.Ps[i] = P[i] + frac * W.dP[m * (st - 1) + i]
        rotate_by(R, th, Rs)
        rates(Rs, ps, vs, gs, W.Ps, &om[3 * urow], &acc[3 * urow], &Y[m * urow], G,
              w, dps[st], dvs[st], dgs[st], &W.dP[m * st], W.Z, W.tmp)
        jinv(th, w, kk[st])

    for c in range(3):
        th[c] = h / 6.0 * (kk[0][c] + 2.0 * kk[1][c] + 2.0 * kk[2][c] + kk[3][c])
        p[c] += h / 6.0 * (dps[0][c] + 2.0 * dps[1][c] + 2.0 * dps[2][c] + dps[3][c])
        v[c] += h / 6.0 * (dvs[0][c] + 2.0 * dvs[1][c] + 2.0 * dvs[2][c] + dvs[3][c])
        g[c] += h / 6.0 * (dgs[0][c] + 2.0 * dgs[1][c] + 2.0 * dgs[2][c] + dgs[3][c])
    for i in range(m):
        P[i] += h / 6.0 * (W.dP[i] + 2.0 * W.dP[m + i] + 2.0 * W.dP[2 * m + i] + W.dP[3 * m + i])
    rotate_by(R, th, Rn)
    memcpy(R, Rn, 9 * sizeof(double))

    for i in range(9):
        if not isfinite(R[i]):
            return 0
    for c in range(3):
        if not (isfinite(p[c]) and isfinite(v[c]) and isfinite(g[c])):
            return 0
    for i in range(m):
        if not isfinite(P[i]):
            return 0
    return 1


cdef class _Ctx:
    cdef Gains G
    cdef Work W
    cdef object keep

    def __cinit__(self, int n, double k_r, kp, kv, kg, gamma_dense, gamma_diag,
                  gamma_u, gamma_v, g_known):
        cdef cnp.ndarray[double, ndim=1] a_kp = np.ascontiguousarray(kp, dtype=float)
        cdef cnp.ndarray[double, ndim=1] a_kv = np.ascontiguousarray(kv, dtype=float)
        cdef cnp.ndarray[double, ndim=1] a_kg = np.ascontiguousarray(kg, dtype=float)
        cdef cnp.ndarray[double, ndim=2] a_gd = np.ascontiguousarray(gamma_dense, dtype=float)
        cdef cnp.ndarray[double, ndim=1] a_gdiag = np.ascontiguousarray(gamma_diag, dtype=float)
        cdef cnp.ndarray[double, ndim=2] a_gu = np.ascontiguousarray(gamma_u, dtype=float)
        cdef cnp.ndarray[double, ndim=2] a_gv = np.ascontiguousarray(gamma_v, dtype=float)
        if a_kp.shape[0] != n or a_kv.shape[0] != n or a_kg.shape[0] != n:
            raise ValueError("gain vectors must have length n")
        if a_gdiag.shape[0] != n:
            raise ValueError("gamma_diag must have length n")
        self.keep = (a_kp, a_kv, a_kg, a_gd, a_gdiag, a_gu, a_gv)
        self.G.n = n
        self.G.k_r = k_r
        self.G.kp = &a_kp[0] if n else NULL
        self.G.kv = &a_kv[0] if n else NULL
        self.G.kg = &a_kg[0] if n else NULL
        self.G.gdiag = &a_gdiag[0] if n else NULL
        self.G.dense = 1 if a_gd.size else 0
        if self.G.dense:
            if a_gd.shape[0] != n or a_gd.shape[1] != n:
                raise ValueError("gamma_dense must be (n, n)")
            self.G.gd = &a_gd[0, 0]
        else:
            self.G.gd = NULL
        self.G.rank = a_gu.shape[1]
        if self.G.rank:
            if a_gu.shape[0] != n or a_gv.shape[0] != n or a_gv.shape[1] != self.G.rank:
                raise ValueError("gamma_u/gamma_v must be (n, r)")
            self.G.gu = &a_gu[0, 0]
            self.G.gv = &a_gv[0, 0]
        else:
            self.G.gu = NULL
            self.G.gv = NULL
        gk = np.asarray(g_known, dtype=float)
        for c in range(3):
            self.G.gk[c] = gk[c]
        cdef int m = 3 * n
        self.W.Z = <double*> malloc(max(m, 1) * sizeof(double))
        self.W.tmp = <double*> malloc(max(3 * self.G.rank, 1) * sizeof(double))
        self.W.Ps = <double*> malloc(max(m, 1) * sizeof(double))
        self.W.dP = <double*> malloc(max(4 * m, 1) * sizeof(double))
        if not (self.W.Z and self.W.tmp and self.W.Ps and self.W.dP):
            raise MemoryError()

    def __dealloc__(self):
        free(self.W.Z)
        free(self.W.tmp)
        free(self.W.Ps)
        free(self.W.dP)


def _state_copies(R, p, v, g, P):
    return (np.array(R, dtype=float, order="C"), np.array(p, dtype=float),
            np.array(v, dtype=float), np.array(g, dtype=float),
            np.array(P, dtype=float, order="C"))


def observer_step(R, p, v, g, P, omega3, accel3, Y3, double k_r, kp, kv, kg,
                  gamma_dense, gamma_diag, gamma_u, gamma_v, g_known, double h):
    R, p, v, g, P = _state_copies(R, p, v, g, P)
    cdef int n = P.shape[0]
    cdef _Ctx ctx = _Ctx(n, k_r, kp, kv, kg, gamma_dense, gamma_diag, gamma_u, gamma_v, g_known)
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omega3, dtype=float)
    cdef cnp.ndarray[double, ndim=2] ac = np.ascontiguousarray(accel3, dtype=float)
    cdef cnp.ndarray[double, ndim=3] Yc = np.ascontiguousarray(np.reshape(Y3, (3, n, 3)), dtype=float)
    cdef double[:, ::1] Rm = R
    cdef double[::1] pm = p
    cdef double[::1] vm = v
    cdef double[::1] gm = g
    cdef double[:, ::1] Pm = P
    cdef double* Pptr = &Pm[0, 0] if n else ctx.W.Ps
    cdef const double* Yptr = &Yc[0, 0, 0] if n else ctx.W.Z
    step_impl(&Rm[0, 0], &pm[0], &vm[0], &gm[0], Pptr, &om[0, 0], &ac[0, 0], Yptr,
              &ctx.G, h, &ctx.W)
    reortho(&Rm[0, 0])
    return R, p, v, g, P


def observer_run(R, p, v, g, P, omega, accel, Y, double k_r, kp, kv, kg,
                 gamma_dense, gamma_diag, gamma_u, gamma_v, g_known, double h,
                 int log_every):
    R, p, v, g, P = _state_copies(R, p, v, g, P)
    cdef int n = P.shape[0]
    cdef _Ctx ctx = _Ctx(n, k_r, kp, kv, kg, gamma_dense, gamma_diag, gamma_u, gamma_v, g_known)
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omega, dtype=float)
    cdef cnp.ndarray[double, ndim=2] ac = np.ascontiguousarray(accel, dtype=float)
    cdef int rows = om.shape[0]
    cdef cnp.ndarray[double, ndim=3] Yc = np.ascontiguousarray(np.reshape(Y, (rows, n, 3)), dtype=float)
    cdef int n_steps = (rows - 1) // 2
    cdef int n_log = n_steps // log_every + 1
    R_log = np.zeros((n_log, 3, 3))
    p_log = np.zeros((n_log, 3))
    v_log = np.zeros((n_log, 3))
    g_log = np.zeros((n_log, 3))
    P_log = np.zeros((n_log, n, 3))
    cdef double[:, :, ::1] Rl = R_log
    cdef double[:, ::1] pl = p_log
    cdef double[:, ::1] vl = v_log
    cdef double[:, ::1] gl = g_log
    cdef double[:, :, ::1] Pl = P_log
    cdef double[:, ::1] Rm = R
    cdef double[::1] pm = p
    cdef double[::1] vm = v
    cdef double[::1] gm = g
    cdef double[:, ::1] Pm = P
    cdef double* Rp = &Rm[0, 0]
    cdef double* Pptr = &Pm[0, 0] if n else ctx.W.Ps
    cdef const double* Y0 = &Yc[0, 0, 0] if n else ctx.W.Z
    cdef int m = 3 * n
    cdef int k, i, li = 0, ok
    memcpy(&Rl[0, 0, 0], Rp, 9 * sizeof(double))
    memcpy(&pl[0, 0], &pm[0], 3 * sizeof(double))
    memcpy(&vl[0, 0], &vm[0], 3 * sizeof(double))
    memcpy(&gl[0, 0], &gm[0], 3 * sizeof(double))
    if n:
        memcpy(&Pl[0, 0, 0], Pptr, m * sizeof(double))
    for k in range(n_steps):
        ok = step_impl(Rp, &pm[0], &vm[0], &gm[0], Pptr, &om[2 * k, 0], &ac[2 * k, 0],
                       Y0 + (2 * k) * m if n else Y0, &ctx.G, h, &ctx.W)
        if not ok:
            return R_log, p_log, v_log, g_log, P_log, k
        reortho(Rp)
        if (k + 1) % log_every == 0:
            li = (k + 1) // log_every
            memcpy(&Rl[li, 0, 0], Rp, 9 * sizeof(double))
            memcpy(&pl[li, 0], &pm[0], 3 * sizeof(double))
            memcpy(&vl[li, 0], &vm[0], 3 * sizeof(double))
            memcpy(&gl[li, 0], &gm[0], 3 * sizeof(double))
            if n:
                memcpy(&Pl[li, 0, 0], Pptr, m * sizeof(double))
    return R_log, p_log, v_log, g_log, P_log, n_steps


cdef void att_step(double* R, const double* om, double h) noexcept nogil:
    cdef double th[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double Rn[9]
    cdef int c
    for c in range(3):
        th[c] = 0.5 * h * om[c]
    jinv(th, &om[3], k2)
    for c in range(3):
        th[c] = 0.5 * h * k2[c]
    jinv(th, &om[3], k3)
    for c in range(3):
        th[c] = h * k3[c]
    jinv(th, &om[6], k4)
    for c in range(3):
        th[c] = h / 6.0 * (om[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
    rotate_by(R, th, Rn)
    memcpy(R, Rn, 9 * sizeof(double))


def attitude_step(R, omega3, double h):
    cdef cnp.ndarray[double, ndim=2] Rc = np.array(R, dtype=float, order="C")
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omega3, dtype=float)
    att_step(&Rc[0, 0], &om[0, 0], h)
    reortho(&Rc[0, 0])
    return Rc


def attitude_run(R, omega, double h):
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omega, dtype=float)
    cdef int n_steps = (om.shape[0] - 1) // 2
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((n_steps + 1, 3, 3))
    cdef cnp.ndarray[double, ndim=2] Rc = np.array(R, dtype=float, order="C")
    cdef int k
    memcpy(&out[0, 0, 0], &Rc[0, 0], 9 * sizeof(double))
    for k in range(n_steps):
        att_step(&Rc[0, 0], &om[2 * k, 0], h)
        reortho(&Rc[0, 0])
        memcpy(&out[k + 1, 0, 0], &Rc[0, 0], 9 * sizeof(double))
    return out


def truth_step(R, p, v, omega3, accel3, g, double h):
    cdef cnp.ndarray[double, ndim=2] Rc = np.array(R, dtype=float, order="C")
    cdef cnp.ndarray[double, ndim=1] pc = np.array(p, dtype=float)
    cdef cnp.ndarray[double, ndim=1] vc = np.array(v, dtype=float)
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omega3, dtype=float)
    cdef cnp.ndarray[double, ndim=2] ac = np.ascontiguousarray(accel3, dtype=float)
    cdef cnp.ndarray[double, ndim=1] gc = np.ascontiguousarray(g, dtype=float)
    cdef double th[3]
    cdef double kk[4][3]
    cdef double dp[4][3]
    cdef double dv[4][3]
    cdef double Rs[9]
    cdef double Ra[3]
    cdef double frac
    cdef int st, c, urow
    cdef double* R0 = &Rc[0, 0]
    for c in range(3):
        kk[0][c] = om[0, c]
    matvec(R0, &ac[0, 0], Ra)
    for c in range(3):
        dp[0][c] = vc[c]
        dv[0][c] = gc[c] + Ra[c]
    for st in range(1, 4):
        frac = 0.5 * h if st < 3 else h
        urow = 1 if st < 3 else 2
        for c in range(3):
            th[c] = frac * kk[st - 1][c]
        rotate_by(R0, th, Rs)
        jinv(th, &om[urow, 0], kk[st])
        matvec(Rs, &ac[urow, 0], Ra)
        for c in range(3):
            dp[st][c] = vc[c] + frac * dv[st - 1][c]
            dv[st][c] = gc[c] + Ra[c]
    for c in range(3):
        th[c] = h / 6.0 * (kk[0][c] + 2.0 * kk[1][c] + 2.0 * kk[2][c] + kk[3][c])
    rotate_by(R0, th, Rs)
    memcpy(R0, Rs, 9 * sizeof(double))
    reortho(R0)
    for c in range(3):
        pc[c] += h / 6.0 * (dp[0][c] + 2.0 * dp[1][c] + 2.0 * dp[2][c] + dp[3][c])
        vc[c] += h / 6.0 * (dv[0][c] + 2.0 * dv[1][c] + 2.0 * dv[2][c] + dv[3][c])
    return Rc, pc, vc
