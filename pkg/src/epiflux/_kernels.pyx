# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled thinning loop for the interacting particle system and its
coupled limit individuals.  Mirrors ``_kernels_py.run_thinning``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

DEF CONSTANT = 0
DEF WINDOW = 1
DEF STEP = 2
DEF EXP_DECAY = 3
DEF SIGMOID = 4
DEF TABULATED = 5


cdef inline double _family(long code, const double* p, const double* tx,
                           const double* ty, Py_ssize_t lo, Py_ssize_t hi,
                           double a) noexcept nogil:
    cdef Py_ssize_t l, h, m
    cdef double z
    if code == CONSTANT:
        return p[0]
    elif code == WINDOW:
        return p[0] if (a >= p[1] and a < p[2]) else 0.0
    elif code == STEP:
        return p[0] if a >= p[1] else 0.0
    elif code == EXP_DECAY:
        return p[0] * exp(-p[1] * a)
    elif code == SIGMOID:
        z = -p[1] * (a - p[0])
        if z > 700.0:
            z = 700.0
        elif z < -700.0:
            z = -700.0
        return p[2] + (p[3] - p[2]) / (1.0 + exp(z))
    else:
        if a <= tx[lo]:
            return ty[lo]
        if a >= tx[hi - 1]:
            return ty[hi - 1]
        l = lo
        h = hi - 1
        while h - l > 1:
            m = (l + h) // 2
            if tx[m] <= a:
                l = m
            else:
                h = m
        return ty[l] + (ty[h] - ty[l]) * (a - tx[l]) / (tx[h] - tx[l])


cdef inline double _eval(const long[::1] codes, const double[:, ::1] params,
                         const double[::1] tx, const double[::1] ty,
                         const long[::1] off, long j, double a) noexcept nogil:
    # raw pointers: slicing memoryviews here would cost refcount traffic per call
    return _family(codes[j], &params[j, 0], &tx[0], &ty[0], off[j], off[j + 1], a)


cdef inline double _interp(const double[::1] tab, double dt, double t) noexcept nogil:
    cdef Py_ssize_t n = tab.shape[0]
    cdef double x = t / dt
    cdef Py_ssize_t i = <Py_ssize_t>x
    if i >= n - 1:
        return tab[n - 1]
    if i < 0:
        return tab[0]
    return tab[i] + (tab[i + 1] - tab[i]) * (x - i)


def run_thinning(double[::1] birth, long[::1] trait,
                 double[::1] birth_lim, long[::1] trait_lim,
                 const long[::1] lam_codes, const double[:, ::1] lam_params,
                 const double[::1] lam_tx, const double[::1] lam_ty, const long[::1] lam_off,
                 const long[::1] gam_codes, const double[:, ::1] gam_params,
                 const double[::1] gam_tx, const double[::1] gam_ty, const long[::1] gam_off,
                 const double[:, ::1] kernel, const double[::1] kcolmax, double lambda_star,
                 const double[::1] cand_t, const long[::1] cand_k,
                 const long[::1] cand_theta, const double[::1] cand_u,
                 const double[::1] snap_t, const double[::1] hist_edges,
                 const double[::1] F_table, double F_dt, int mode):
    """Process the candidate stream in time order.

    ``mode`` 0: interacting system only; 1: limit individuals only (force of
    infection read from ``F_table``); 2: both, driven by the same candidates.
    ``birth``/``birth_lim`` hold ``t - age`` and are updated in place.
    """
    cdef Py_ssize_t N = birth.shape[0]
    cdef Py_ssize_t M = cand_t.shape[0]
    cdef Py_ssize_t S = snap_t.shape[0]
    cdef Py_ssize_t J = kernel.shape[0]
    cdef Py_ssize_t B = hist_edges.shape[0] - 1 if hist_edges.shape[0] > 1 else 0
    cdef bint run_n = mode != 1
    cdef bint run_l = mode != 0

    ev_time_np = np.empty(M, dtype=np.float64)
    ev_k_np = np.empty(M, dtype=np.int64)
    ev_from_np = np.empty(M, dtype=np.int64)
    ev_to_np = np.empty(M, dtype=np.int64)
    ev_age_np = np.empty(M, dtype=np.float64)
    ev_l_time_np = np.empty(M if run_l else 0, dtype=np.float64)
    ev_l_k_np = np.empty(M if run_l else 0, dtype=np.int64)
    snap_F_np = np.zeros(S, dtype=np.float64)
    snap_S_np = np.zeros((S, J), dtype=np.float64)
    snap_hist_np = np.zeros((S, max(B, 1)), dtype=np.int64)
    cnt_n_np = np.zeros(N, dtype=np.int64)
    cnt_l_np = np.zeros(N if run_l else 0, dtype=np.int64)
    sup_dA_np = np.zeros(N if mode == 2 else 0, dtype=np.int64)
    sup_da_np = np.zeros(N if mode == 2 else 0, dtype=np.float64)
    n_accept_np = np.zeros(2, dtype=np.int64)

    cdef double[::1] ev_time = ev_time_np
    cdef long[::1] ev_k = ev_k_np
    cdef long[::1] ev_from = ev_from_np
    cdef long[::1] ev_to = ev_to_np
    cdef double[::1] ev_age = ev_age_np
    cdef double[::1] ev_l_time = ev_l_time_np
    cdef long[::1] ev_l_k = ev_l_k_np
    cdef double[::1] snap_F = snap_F_np
    cdef double[:, ::1] snap_S = snap_S_np
    cdef long[:, ::1] snap_hist = snap_hist_np
    cdef long[::1] cnt_n = cnt_n_np
    cdef long[::1] cnt_l = cnt_l_np
    cdef long[::1] sup_dA = sup_dA_np
    cdef double[::1] sup_da = sup_da_np

    cdef Py_ssize_t c, s = 0, k, j, b, n_ev = 0, n_ev_l = 0
    cdef long th, tk
    cdef double t, acc, g, FN, Fl, age, a_min, d
    cdef double inv_n = 1.0 / N
    cdef long diff

    with nogil:
        for c in range(M + 1):
            t = cand_t[c] if c < M else 1e300
            # snapshots strictly before the next candidate
            while s < S and snap_t[s] < t:
                if run_n:
                    acc = 0.0
                    for k in range(N):
                        acc = acc + _eval(lam_codes, lam_params, lam_tx, lam_ty, lam_off,
                                          trait[k], snap_t[s] - birth[k])
                    snap_F[s] = acc * inv_n
                    for k in range(N):
                        age = snap_t[s] - birth[k]
                        tk = trait[k]
                        g = _eval(gam_codes, gam_params, gam_tx, gam_ty, gam_off, tk, age)
                        if g != 0.0:
                            for j in range(J):
                                snap_S[s, j] += g * kernel[tk, j]
                        if B > 0:
                            if age >= hist_edges[B]:
                                snap_hist[s, B - 1] += 1
                            else:
                                for b in range(B):
                                    if age < hist_edges[b + 1]:
                                        if age >= hist_edges[b]:
                                            snap_hist[s, b] += 1
                                        break
                    for j in range(J):
                        snap_S[s, j] = snap_S[s, j] * inv_n
                s += 1
            if c == M:
                break
            k = cand_k[c]
            th = cand_theta[c]
            if run_n:
                tk = trait[k]
                g = _eval(gam_codes, gam_params, gam_tx, gam_ty, gam_off, tk, t - birth[k])
                if g != 0.0 and kernel[tk, th] != 0.0:
                    acc = 0.0
                    for j in range(N):
                        acc = acc + _eval(lam_codes, lam_params, lam_tx, lam_ty, lam_off,
                                          trait[j], t - birth[j])
                    FN = acc * inv_n
                    if FN * g * kernel[tk, th] >= cand_u[c] * lambda_star * kcolmax[th]:
                        ev_time[n_ev] = t
                        ev_k[n_ev] = k
                        ev_from[n_ev] = tk
                        ev_to[n_ev] = th
                        ev_age[n_ev] = t - birth[k]
                        n_ev += 1
                        birth[k] = t
                        trait[k] = th
                        cnt_n[k] += 1
            if run_l:
                tk = trait_lim[k]
                g = _eval(gam_codes, gam_params, gam_tx, gam_ty, gam_off, tk, t - birth_lim[k])
                if g != 0.0 and kernel[tk, th] != 0.0:
                    Fl = _interp(F_table, F_dt, t)
                    if Fl * g * kernel[tk, th] >= cand_u[c] * lambda_star * kcolmax[th]:
                        ev_l_time[n_ev_l] = t
                        ev_l_k[n_ev_l] = k
                        n_ev_l += 1
                        birth_lim[k] = t
                        trait_lim[k] = th
                        cnt_l[k] += 1
            if mode == 2:
                diff = cnt_n[k] - cnt_l[k]
                if diff < 0:
                    diff = -diff
                if diff > sup_dA[k]:
                    sup_dA[k] = diff
                d = fabs(birth[k] - birth_lim[k])
                if d > sup_da[k]:
                    sup_da[k] = d

    n_accept_np[0] = n_ev
    n_accept_np[1] = n_ev_l
    return {
        "ev_time": ev_time_np[:n_ev], "ev_k": ev_k_np[:n_ev], "ev_from": ev_from_np[:n_ev],
        "ev_to": ev_to_np[:n_ev], "ev_age": ev_age_np[:n_ev],
        "ev_l_time": ev_l_time_np[:n_ev_l], "ev_l_k": ev_l_k_np[:n_ev_l],
        "snap_F": snap_F_np, "snap_S": snap_S_np, "snap_hist": snap_hist_np[:, :B],
        "count": cnt_n_np, "count_lim": cnt_l_np,
        "sup_dA": sup_dA_np, "sup_da": sup_da_np,
    }
