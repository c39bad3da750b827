"""Pure-Python/numpy version of the thinning loop (same contract as the
compiled ``_kernels.run_thinning``).  Used when the extension is missing or
``EPIFLUX_PURE_PYTHON=1``."""

from __future__ import annotations

import numpy as np

from . import families as fam


def _evaluator(codes, params, tx, ty, off):
    J = len(codes)
    funcs = []
    for j in range(J):
        c, p = int(codes[j]), params[j]
        if c == fam.CONSTANT:
            f = fam.Constant(p[0])
        elif c == fam.WINDOW:
            f = fam.Window(p[0], p[1], p[2])
        elif c == fam.STEP:
            f = fam.Step(p[0], p[1])
        elif c == fam.EXP_DECAY:
            f = fam.ExpDecay(p[0], p[1])
        elif c == fam.SIGMOID:
            f = fam.Sigmoid(p[0], p[1], p[2], p[3])
        else:
            f = fam.Tabulated(tx[off[j]:off[j + 1]], ty[off[j]:off[j + 1]])
        funcs.append(f)
    single = all(f == funcs[0] for f in funcs)

    def scalar(j, a):
        return float(funcs[j](a))

    def vector(traits, ages):
        if single:
            return funcs[0](ages)
        out = np.empty_like(ages)
        for j in range(J):
            m = traits == j
            out[m] = funcs[j](ages[m])
        return out

    return scalar, vector


def run_thinning(birth, trait, birth_lim, trait_lim,
                 lam_codes, lam_params, lam_tx, lam_ty, lam_off,
                 gam_codes, gam_params, gam_tx, gam_ty, gam_off,
                 kernel, kcolmax, lambda_star,
                 cand_t, cand_k, cand_theta, cand_u,
                 snap_t, hist_edges, F_table, F_dt, mode):
    lam_s, lam_v = _evaluator(lam_codes, lam_params, lam_tx, lam_ty, lam_off)
    gam_s, gam_v = _evaluator(gam_codes, gam_params, gam_tx, gam_ty, gam_off)
    N = birth.shape[0]
    J = kernel.shape[0]
    S = snap_t.shape[0]
    B = hist_edges.shape[0] - 1 if hist_edges.shape[0] > 1 else 0
    run_n, run_l = mode != 1, mode != 0
    grid = np.arange(F_table.shape[0]) * F_dt if F_table.shape[0] else None

    ev = {k: [] for k in ("ev_time", "ev_k", "ev_from", "ev_to", "ev_age", "ev_l_time", "ev_l_k")}
    snap_F = np.zeros(S)
    snap_S = np.zeros((S, J))
    snap_hist = np.zeros((S, max(B, 1)), dtype=np.int64)
    cnt_n = np.zeros(N, dtype=np.int64)
    cnt_l = np.zeros(N if run_l else 0, dtype=np.int64)
    sup_dA = np.zeros(N if mode == 2 else 0, dtype=np.int64)
    sup_da = np.zeros(N if mode == 2 else 0)

    def snapshot(s):
        ages = snap_t[s] - birth
        snap_F[s] = lam_v(trait, ages).sum() / N
        g = gam_v(trait, ages)
        snap_S[s] = (g[:, None] * kernel[trait]).sum(axis=0) / N
        if B > 0:
            idx = np.searchsorted(hist_edges, ages, side="right") - 1
            idx = np.clip(idx, 0, B - 1)
            snap_hist[s, :B] = np.bincount(idx, minlength=B)

    s = 0
    M = cand_t.shape[0]
    for c in range(M):
        t = cand_t[c]
        while s < S and snap_t[s] < t:
            if run_n:
                snapshot(s)
            s += 1
        k, th, u = int(cand_k[c]), int(cand_theta[c]), cand_u[c]
        bound = u * lambda_star * kcolmax[th]
        if run_n:
            tk = int(trait[k])
            g = gam_s(tk, t - birth[k])
            if g != 0.0 and kernel[tk, th] != 0.0:
                FN = lam_v(trait, t - birth).sum() / N
                if FN * g * kernel[tk, th] >= bound:
                    ev["ev_time"].append(t)
                    ev["ev_k"].append(k)
                    ev["ev_from"].append(tk)
                    ev["ev_to"].append(th)
                    ev["ev_age"].append(t - birth[k])
                    birth[k] = t
                    trait[k] = th
                    cnt_n[k] += 1
        if run_l:
            tk = int(trait_lim[k])
            g = gam_s(tk, t - birth_lim[k])
            if g != 0.0 and kernel[tk, th] != 0.0:
                Fl = float(np.interp(t, grid, F_table))
                if Fl * g * kernel[tk, th] >= bound:
                    ev["ev_l_time"].append(t)
                    ev["ev_l_k"].append(k)
                    birth_lim[k] = t
                    trait_lim[k] = th
                    cnt_l[k] += 1
        if mode == 2:
            sup_dA[k] = max(sup_dA[k], abs(cnt_n[k] - cnt_l[k]))
            sup_da[k] = max(sup_da[k], abs(birth[k] - birth_lim[k]))
    while s < S:
        if run_n:
            snapshot(s)
        s += 1

    out = {
        "ev_time": np.asarray(ev["ev_time"], dtype=float),
        "ev_k": np.asarray(ev["ev_k"], dtype=np.int64),
        "ev_from": np.asarray(ev["ev_from"], dtype=np.int64),
        "ev_to": np.asarray(ev["ev_to"], dtype=np.int64),
        "ev_age": np.asarray(ev["ev_age"], dtype=float),
        "ev_l_time": np.asarray(ev["ev_l_time"], dtype=float),
        "ev_l_k": np.asarray(ev["ev_l_k"], dtype=np.int64),
        "snap_F": snap_F, "snap_S": snap_S, "snap_hist": snap_hist[:, :B],
        "count": cnt_n, "count_lim": cnt_l, "sup_dA": sup_dA, "sup_da": sup_da,
    }
    return out
