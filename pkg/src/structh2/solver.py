"""Conic backend: dense primal-dual interior-point solver for PSD programs.

Solves the compiled standard form

    minimize c^T x   s.t.   A x = b,   G x + s = h,   s in K,

K a product of svec'd PSD cones, through the homogeneous self-dual embedding

    A^T y + G^T z + c tau = 0        z in K
    -A x          + b tau = 0
    -G x          + h tau = s        s in K
    -c^T x - b^T y - h^T z = kappa   tau, kappa >= 0

whose skew symmetry forces s.z + tau*kappa = 0 at solutions: tau > 0 recovers
a primal-dual optimum, kappa > 0 a certificate of primal infeasibility
(b^T y + h^T z < 0) or unboundedness (c^T x < 0). Search directions use
Nesterov-Todd scaling with a Mehrotra predictor-corrector; step fraction 0.98
to the cone boundary. Equality and cone rows are Ruiz-equilibrated (one scalar
per PSD block, so cones are preserved), but convergence is declared on
residuals of the original data. Everything is deterministic dense numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .lmi import ConicForm, svec_len


@dataclass
class SolverOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-7
    tol_infeas: float = 1e-9
    max_iter: int = 200
    step_frac: float = 0.98
    backend: str = "embedded"       # "embedded" | "external"
    verbose: bool = False


@dataclass
class SolveReport:
    status: str                      # Optimal | Infeasible | Unbounded | NumericalTrouble
    x: np.ndarray | None
    objective: float | None
    dual_objective: float | None = None
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    certificate: dict | None = None
    backend: str = "embedded"


def solve(conic: ConicForm, opts: SolverOptions | None = None) -> SolveReport:
    opts = opts or SolverOptions()
    if conic.bad_rows:
        # contradictory equalities detected at compile time
        return SolveReport(status="Infeasible", x=None, objective=None,
                           residuals={"feas": 0.0, "gap": 0.0},
                           certificate={"kind": "presolve_contradiction",
                                        "rows": len(conic.bad_rows), "residual": 0.0},
                           backend=opts.backend)
    if opts.backend == "external":
        return _solve_clarabel(conic, opts)
    if opts.backend != "embedded":
        raise ValueError(f"unknown solver backend {opts.backend!r}")
    return _solve_embedded(conic, opts)


# --- cone utilities ---------------------------------------------------------

class _Cone:
    """Index bookkeeping and batched smat/svec for a product of PSD blocks."""

    def __init__(self, dims):
        self.dims = tuple(int(d) for d in dims)
        self.offsets = []
        off = 0
        for d in self.dims:
            self.offsets.append(off)
            off += svec_len(d)
        self.total = off
        self.degree = sum(self.dims)
        self._iu = {d: np.triu_indices(d) for d in set(self.dims)}
        self._scale = {d: np.where(self._iu[d][0] == self._iu[d][1], 1.0, np.sqrt(2.0))
                       for d in set(self.dims)}

    def blocks(self, v):
        for d, off in zip(self.dims, self.offsets):
            yield d, v[off:off + svec_len(d)]

    def smat(self, d, v):
        iu = self._iu[d]
        M = np.zeros((d, d))
        M[iu] = v / self._scale[d]
        M = M + M.T
        M[np.arange(d), np.arange(d)] *= 0.5
        return M

    def svec(self, d, M):
        iu = self._iu[d]
        return 0.5 * (M[iu] + M.T[iu]) * self._scale[d]

    def smat_batch(self, d, V):
        """(k, dsvec) rows -> (k, d, d) symmetric matrices."""
        iu = self._iu[d]
        k = V.shape[0]
        M = np.zeros((k, d, d))
        M[:, iu[0], iu[1]] = V / self._scale[d]
        M = M + M.transpose(0, 2, 1)
        M[:, np.arange(d), np.arange(d)] *= 0.5
        return M

    def svec_batch(self, d, M):
        iu = self._iu[d]
        return 0.5 * (M[:, iu[0], iu[1]] + M[:, iu[1], iu[0]]) * self._scale[d]

    def identity(self):
        e = np.zeros(self.total)
        for d, off in zip(self.dims, self.offsets):
            e[off:off + svec_len(d)] = self.svec(d, np.eye(d))
        return e


class _Scaling:
    """Nesterov-Todd scaling point per block: W z = W^{-T} s = lambda."""

    def __init__(self, cone: _Cone, s, z):
        self.cone = cone
        self.R, self.Rinv, self.lam = [], [], []
        for (d, sb), (_, zb) in zip(cone.blocks(s), cone.blocks(z)):
            S = cone.smat(d, sb)
            Z = cone.smat(d, zb)
            Ls = np.linalg.cholesky(S)
            Lz = np.linalg.cholesky(Z)
            U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
            sq = np.sqrt(sig)
            R = Ls @ (Vt.T / sq)
            Rinv = (U / sq).T @ Lz.T
            self.R.append(R)
            self.Rinv.append(Rinv)
            self.lam.append(sig)

    def _map(self, v, left, right):
        out = np.empty_like(v)
        for i, (d, vb) in enumerate(self.cone.blocks(v)):
            M = self.cone.smat(d, vb)
            out[self.cone.offsets[i]:self.cone.offsets[i] + svec_len(d)] = \
                self.cone.svec(d, left[i] @ M @ right[i])
        return out

    def w_apply(self, dz):
        """W dz = svec(R^T mat(dz) R)."""
        return self._map(dz, [R.T for R in self.R], self.R)

    def wt_apply(self, v):
        """W^T v = svec(R mat(v) R^T)."""
        return self._map(v, self.R, [R.T for R in self.R])

    def winvt_apply(self, ds):
        """W^{-T} ds = svec(R^{-1} mat(ds) R^{-T})."""
        return self._map(ds, self.Rinv, [Ri.T for Ri in self.Rinv])

    def wtw_inv_apply(self, v):
        """(W^T W)^{-1} v = svec(Wm^{-1} mat(v) Wm^{-1}), Wm = R R^T."""
        wm_inv = [Ri.T @ Ri for Ri in self.Rinv]
        return self._map(v, wm_inv, wm_inv)

    def lam_vec(self):
        """svec of the diagonal scaled point Lambda."""
        out = np.zeros(self.cone.total)
        for i, d in enumerate(self.cone.dims):
            out[self.cone.offsets[i]:self.cone.offsets[i] + svec_len(d)] = \
                self.cone.svec(d, np.diag(self.lam[i]))
        return out

    def lam_solve(self, v):
        """Solve lambda o u = v in svec coordinates (Lambda is diagonal)."""
        out = np.empty_like(v)
        for i, (d, vb) in enumerate(self.cone.blocks(v)):
            M = self.cone.smat(d, vb)
            denom = 0.5 * (self.lam[i][:, None] + self.lam[i][None, :])
            out[self.cone.offsets[i]:self.cone.offsets[i] + svec_len(d)] = \
                self.cone.svec(d, M / denom)
        return out

    def max_step(self, dtilde):
        """Largest alpha with Lambda + alpha*mat(dtilde) staying PSD."""
        alpha = np.inf
        for i, (d, db) in enumerate(self.cone.blocks(dtilde)):
            M = self.cone.smat(d, db)
            sq = np.sqrt(self.lam[i])
            lmin = float(np.linalg.eigvalsh(M / np.outer(sq, sq))[0])
            if lmin < 0:
                alpha = min(alpha, -1.0 / lmin)
        return alpha


_KKT_REFINE = 6

_BASIS_CACHE: dict = {}


def _sym_basis(cone: _Cone, d: int) -> np.ndarray:
    """Stack of svec basis matrices for S^d: (svec_len(d), d, d)."""
    B = _BASIS_CACHE.get(d)
    if B is None:
        iu_r, iu_c = cone._iu[d]
        B = np.zeros((svec_len(d), d, d))
        idx = np.arange(svec_len(d))
        B[idx, iu_r, iu_c] += 1.0 / cone._scale[d]
        B[idx, iu_c, iu_r] += 1.0 / cone._scale[d]
        diag = iu_r == iu_c
        B[idx[diag], iu_r[diag], iu_c[diag]] *= 0.5
        _BASIS_CACHE[d] = B
    return B


def _sym_prod(cone: _Cone, u, v):
    """Jordan product (UV + VU)/2 in svec coordinates."""
    out = np.empty_like(u)
    for i, ((d, ub), (_, vb)) in enumerate(zip(cone.blocks(u), cone.blocks(v))):
        U = cone.smat(d, ub)
        V = cone.smat(d, vb)
        out[cone.offsets[i]:cone.offsets[i] + svec_len(d)] = \
            cone.svec(d, 0.5 * (U @ V + V @ U))
    return out


# --- equilibration ----------------------------------------------------------

def _equilibrate(A, b, G, h, c, dims, iters: int = 4):
    """Ruiz-style scaling; PSD blocks get one uniform row scale each."""
    p, N = A.shape
    M = G.shape[0]
    drA = np.ones(p)
    drG = np.ones(M)
    dcol = np.ones(N)
    starts = []
    off = 0
    for d in dims:
        starts.append((off, off + svec_len(d)))
        off += svec_len(d)
    As, Gs = A.copy(), G.copy()
    for _ in range(iters):
        cm = np.maximum(np.abs(As).max(axis=0, initial=0.0),
                        np.abs(Gs).max(axis=0, initial=0.0))
        sc = 1.0 / np.sqrt(np.maximum(cm, 1e-8))
        sc[cm == 0.0] = 1.0
        dcol *= sc
        As *= sc[None, :]
        Gs *= sc[None, :]
        if p:
            rm = np.abs(As).max(axis=1, initial=0.0)
            sr = 1.0 / np.sqrt(np.maximum(rm, 1e-8))
            sr[rm == 0.0] = 1.0
            drA *= sr
            As *= sr[:, None]
        for lo, hi in starts:
            rm = np.abs(Gs[lo:hi]).max(initial=0.0)
            sr = 1.0 if rm == 0.0 else 1.0 / np.sqrt(max(rm, 1e-8))
            drG[lo:hi] *= sr
            Gs[lo:hi] *= sr
    bs = drA * b
    hs = drG * h
    cs = dcol * c
    cscale = 1.0 / max(1.0, np.abs(cs).max(initial=0.0))
    return As, bs, Gs, hs, cs * cscale, drA, drG, dcol, cscale


# --- the embedded solver ----------------------------------------------------

def _solve_embedded(conic: ConicForm, opts: SolverOptions) -> SolveReport:
    A0, b0, G0, h0, c0 = conic.A, conic.b, conic.G, conic.h, conic.c
    dims = conic.dims
    if not dims:
        raise ValueError("the embedded solver needs at least one PSD block")
    N = conic.n_reduced
    p = A0.shape[0]
    cone = _Cone(dims)

    A, b, G, h, c, drA, drG, dcol, cscale = _equilibrate(A0, b0, G0, h0, c0, dims)

    x = np.zeros(N)
    y = np.zeros(p)
    s = cone.identity()
    z = cone.identity()
    tau, kappa = 1.0, 1.0
    nu = cone.degree + 1

    def candidates():
        X = dcol * (x / tau)
        Y = (drA * y) / (tau * cscale) if p else np.zeros(0)
        Z = (drG * z) / (tau * cscale)
        return X, Y, Z

    def residual_metrics(X, Y, Z):
        # primal feasibility is the conic violation of the candidate itself:
        # downstream consumers evaluate eigenvalues of h - G x, not the
        # solver's internal slack iterate
        slack = h0 - G0 @ X
        viol = 0.0
        for d, vb in cone.blocks(slack):
            viol = max(viol, -float(np.linalg.eigvalsh(cone.smat(d, vb))[0]))
        pres = max(viol, 0.0)    # absolute: consumers check block eigenvalues
        if p:
            pres = max(pres, np.abs(A0 @ X - b0).max() / (1.0 + np.abs(b0).max(initial=0.0)))
        gtz = G0.T @ Z
        aty = A0.T @ Y if p else 0.0
        dres_vec = gtz + aty + c0
        # normalized by the size of the dual terms, as is standard: the raw
        # residual cannot cancel below roundoff of the terms that form it
        dscale = (1.0 + np.abs(c0).max(initial=0.0) + np.abs(gtz).max(initial=0.0)
                  + (np.abs(aty).max(initial=0.0) if p else 0.0))
        dres = np.abs(dres_vec).max(initial=0.0) / dscale
        pobj = float(c0 @ X)
        dobj = float(-h0 @ Z - (b0 @ Y if p else 0.0))
        gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
        return pres, dres, gap, pobj, dobj

    best = None      # (score, X, pobj, metrics, iteration)
    stall = 0
    it = 0
    for it in range(opts.max_iter + 1):
        # --- termination checks on the original data
        X, Y, Z = candidates()
        pres, dres, gap, pobj, dobj = residual_metrics(X, Y, Z)
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, X.copy(), pobj, {"feas": max(pres, dres), "gap": gap}, it)
        if opts.verbose:
            print(f"  it={it:3d} pres={pres:.2e} dres={dres:.2e} gap={gap:.2e} "
                  f"tau={tau:.2e} kappa={kappa:.2e}")
        if pres <= opts.tol_feas and dres <= opts.tol_feas and gap <= opts.tol_gap:
            return SolveReport(status="Optimal", x=X,
                               objective=pobj + conic.obj_const,
                               dual_objective=dobj + conic.obj_const,
                               residuals={"feas": max(pres, dres), "gap": gap},
                               iterations=it, backend="embedded")
        # primal infeasibility: (y, z) ray with A^T y + G^T z = 0, b^T y + h^T z < 0
        Yr = drA * y if p else np.zeros(0)
        Zr = drG * z
        denom = -(float(b0 @ Yr) if p else 0.0) - float(h0 @ Zr)
        if denom > 0:
            Yc, Zc = Yr / denom, Zr / denom
            res = np.abs(G0.T @ Zc + (A0.T @ Yc if p else 0.0)).max(initial=0.0)
            scale_c = 1.0 + max(np.abs(Zc).max(initial=0.0),
                                np.abs(Yc).max(initial=0.0))
            if res <= opts.tol_infeas * scale_c:
                return SolveReport(status="Infeasible", x=None, objective=None,
                                   residuals={"feas": res, "gap": 0.0},
                                   iterations=it,
                                   certificate={"kind": "primal_infeasibility",
                                                "y": Yc, "z": Zc,
                                                "residual": float(res)},
                                   backend="embedded")
        # unboundedness: x ray with A x = 0, G x + s = 0, c^T x < 0
        Xr = dcol * x
        Sr = s / drG
        cdx = float(c0 @ Xr)
        if cdx < 0:
            Xc, Sc = Xr / (-cdx), Sr / (-cdx)
            res = np.abs(G0 @ Xc + Sc).max(initial=0.0)
            if p:
                res = max(res, np.abs(A0 @ Xc).max())
            if res <= opts.tol_infeas * (1.0 + np.abs(Xc).max(initial=0.0)):
                return SolveReport(status="Unbounded", x=None, objective=None,
                                   residuals={"feas": res, "gap": 0.0},
                                   iterations=it,
                                   certificate={"kind": "unboundedness", "x": Xc,
                                                "residual": float(res)},
                                   backend="embedded")
        if it == opts.max_iter or stall >= 8:
            break
        if score > 1e3 * best[0] and best[0] < 1e-4:
            break  # diverging after near-convergence; keep the best iterate
        if it - best[4] >= 5 and best[0] < 1e-5:
            break  # no progress for several iterations; grinding on noise

        # --- residuals of the homogeneous model (scaled data)
        rx = (A.T @ y if p else 0.0) + G.T @ z + c * tau
        ry = -A @ x + b * tau if p else np.zeros(0)
        rz = -G @ x + h * tau - s
        rtau = -float(c @ x) - (float(b @ y) if p else 0.0) - float(h @ z) - kappa
        mu = (float(s @ z) + tau * kappa) / nu

        try:
            W = _Scaling(cone, s, z)
        except np.linalg.LinAlgError:
            break
        lam = W.lam_vec()

        # augmented KKT: eliminating dz would square the scaling's condition
        # number; the full quasi-definite system plus refinement stays stable
        # near optimality
        M = cone.total
        WtW = np.zeros((M, M))
        for i, d in enumerate(cone.dims):
            lo = cone.offsets[i]
            hi = lo + svec_len(d)
            Wm = W.R[i] @ W.R[i].T
            Bb = _sym_basis(cone, d)
            Ob = cone.svec_batch(d, Wm[None] @ Bb @ Wm[None])
            WtW[lo:hi, lo:hi] = 0.5 * (Ob + Ob.T)
        K3 = np.zeros((N + p + M, N + p + M))
        K3[:N, N:N + p] = A.T
        K3[N:N + p, :N] = A
        K3[:N, N + p:] = G.T
        K3[N + p:, :N] = G
        K3[N + p:, N + p:] = -WtW
        # symmetric Ruiz equilibration keeps the pivots balanced as the
        # scaling point degenerates near optimality
        dk = np.ones(N + p + M)
        K3s = K3
        for _ in range(5):
            rowmax = np.abs(K3s).max(axis=1)
            sc = 1.0 / np.sqrt(np.maximum(rowmax, 1e-14))
            sc[rowmax == 0.0] = 1.0
            dk *= sc
            K3s = (K3 * dk[:, None]) * dk[None, :]
        K3l = K3.astype(np.longdouble)
        WtWl = WtW.astype(np.longdouble)
        scale_k = 1.0 + np.abs(K3s).max(initial=0.0)
        reg_ladder = (1e-13, 1e-11, 1e-9, 1e-7)
        lus = {}

        def factor(idx):
            lu = lus.get(idx)
            if lu is None:
                K3r = K3s.copy()
                reg = reg_ladder[idx] * scale_k
                K3r[np.arange(N), np.arange(N)] += reg
                K3r[np.arange(N, N + p + M), np.arange(N, N + p + M)] -= reg
                lu = lu_factor(K3r)
                lus[idx] = lu
            return lu

        def solve_refined(lu, rhs):
            # working-precision passes first (BLAS-fast), then an
            # extended-precision polish: float64 residuals bottom out at
            # their own noise floor, so the final error estimate must come
            # from the extended-precision measurement
            sol = dk * lu_solve(lu, dk * rhs)
            tol_rhs = 1e-13 * (1.0 + np.abs(rhs).max(initial=0.0))
            prev = np.inf
            for _ in range(3):
                resid = rhs - K3 @ sol
                err = np.abs(resid).max(initial=0.0)
                if err >= prev or err <= tol_rhs:
                    break
                prev = err
                sol = sol + dk * lu_solve(lu, dk * resid)
            best_sol, best_err = sol, np.inf
            for _ in range(3):
                resid = np.asarray(rhs - K3l @ sol.astype(np.longdouble), dtype=float)
                err = np.abs(resid).max(initial=0.0)
                if err >= best_err:
                    break
                best_sol, best_err = sol, err
                if err <= tol_rhs:
                    break
                sol = sol + dk * lu_solve(lu, dk * resid)
            return best_sol, best_err

        res_scale = 1.0 + max(np.abs(rx).max(initial=0.0),
                              np.abs(ry).max(initial=0.0),
                              np.abs(rz).max(initial=0.0), abs(rtau))

        def solve3(rxh, ryh, rzh):
            # try regularizations from the smallest; keep the most accurate
            # direction rather than the last attempt, so escalation can only
            # help
            rhs = np.concatenate([rxh, -ryh, -rzh])
            tol_dir = 1e-12 * res_scale
            best_sol, best_err = None, np.inf
            for idx in range(len(reg_ladder)):
                try:
                    lu = factor(idx)
                except np.linalg.LinAlgError:
                    continue
                sol, err = solve_refined(lu, rhs)
                if err < best_err and np.all(np.isfinite(sol)):
                    best_sol, best_err = sol, err
                if best_err <= tol_dir:
                    break
            if best_sol is None:
                return None, np.inf
            return (best_sol[:N], best_sol[N:N + p], best_sol[N + p:]), best_err

        u1, _ = solve3(c, b, h)
        if u1 is None or not np.all(np.isfinite(u1[0])):
            break
        dx1, dy1, dz1 = u1

        def hdot(u, v):
            return np.dot(u.astype(np.longdouble), v.astype(np.longdouble))

        g1 = hdot(c, dx1) + (hdot(b, dy1) if p else 0.0) + hdot(h, dz1)

        def direction(sigma, eta_s, eta_kappa):
            ds0 = W.wt_apply(W.lam_solve(eta_s))
            u2, _ = solve3(-(1 - sigma) * rx, -(1 - sigma) * ry,
                           -(1 - sigma) * rz + ds0)
            if u2 is None:
                return None
            dx2, dy2, dz2 = u2
            # the tau pivot and the slack update both suffer catastrophic
            # cancellation at small mu; extended precision keeps them honest
            g2 = hdot(c, dx2) + (hdot(b, dy2) if p else 0.0) + hdot(h, dz2)
            dtau = float((g2 + eta_kappa / tau - (1 - sigma) * rtau)
                         / (g1 + kappa / tau))
            dx = dx2 - dtau * dx1
            dy = dy2 - dtau * dy1
            dz = dz2 - dtau * dz1
            ds = ds0 - np.asarray(WtWl @ dz.astype(np.longdouble), dtype=float)
            dkappa = (eta_kappa - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def boundary_step(dz, ds, dtau, dkappa):
            alpha = min(W.max_step(W.w_apply(dz)), W.max_step(W.winvt_apply(ds)))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        # predictor
        lam_sq = _sym_prod(cone, lam, lam)
        da = direction(0.0, -lam_sq, -tau * kappa)
        if da is None:
            break
        a_aff = min(1.0, boundary_step(da[2], da[3], da[4], da[5]))
        mu_aff = (float((s + a_aff * da[3]) @ (z + a_aff * da[2]))
                  + (tau + a_aff * da[4]) * (kappa + a_aff * da[5])) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector, dropped when its lambda-inverse amplification would
        # swamp the base right-hand side and inject roundoff into the
        # linear rows (only happens very near the central-path endgame)
        base = sigma * mu * cone.identity() - lam_sq
        corr = _sym_prod(cone, W.winvt_apply(da[3]), W.w_apply(da[2]))
        base_amp = np.abs(W.lam_solve(base)).max(initial=0.0)
        corr_amp = np.abs(W.lam_solve(corr)).max(initial=0.0)
        if corr_amp <= 100.0 * (1.0 + base_amp):
            eta_s = base - corr
            eta_kappa = sigma * mu - tau * kappa - da[4] * da[5]
        else:
            eta_s = base
            eta_kappa = sigma * mu - tau * kappa
        step = direction(sigma, eta_s, eta_kappa)
        if step is None:
            break
        dx, dy, dz, ds, dtau, dkappa = step

        alpha = min(1.0, opts.step_frac * boundary_step(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 0:
            break
        stall = stall + 1 if alpha < 1e-4 else 0

        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not (np.isfinite(tau) and np.isfinite(kappa) and tau > 0 and kappa > 0
                and np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
            break
        # the embedding is positively homogeneous: renormalizing the iterate
        # to tau = 1 keeps the recovered candidates free of 1/tau noise
        # amplification without changing the trajectory
        rescale = 1.0 / tau
        x *= rescale
        y *= rescale
        z *= rescale
        s *= rescale
        kappa *= rescale
        tau = 1.0

    if best is not None:
        return SolveReport(status="NumericalTrouble", x=best[1],
                           objective=best[2] + conic.obj_const,
                           residuals=best[3], iterations=it, backend="embedded")
    X, Y, Z = candidates()
    pres, dres, gap, pobj, dobj = residual_metrics(X, Y, Z)
    return SolveReport(status="NumericalTrouble", x=X,
                       objective=pobj + conic.obj_const,
                       residuals={"feas": max(pres, dres), "gap": gap},
                       iterations=it, backend="embedded")


def infeasibility_residual(conic: ConicForm, certificate: dict) -> float:
    """Recompute the improving-ray residual of an infeasibility certificate."""
    if certificate.get("kind") == "presolve_contradiction":
        return 0.0
    y = np.asarray(certificate["y"], dtype=float)
    z = np.asarray(certificate["z"], dtype=float)
    denom = -(float(conic.b @ y) if y.size else 0.0) - float(conic.h @ z)
    if denom <= 0:
        return np.inf
    y, z = y / denom, z / denom
    res = conic.G.T @ z
    if y.size:
        res = res + conic.A.T @ y
    cone = _Cone(conic.dims)
    eig_viol = 0.0
    for d, zb in cone.blocks(z):
        eig_viol = max(eig_viol, -float(np.linalg.eigvalsh(cone.smat(d, zb))[0]))
    return max(float(np.abs(res).max(initial=0.0)), eig_viol)


# --- optional external backend ---------------------------------------------

def _clarabel_perm(d: int) -> np.ndarray:
    """Map row-major-upper svec positions to column-major-upper positions."""
    pos = {}
    idx = 0
    for i in range(d):
        for j in range(i, d):
            pos[(i, j)] = idx
            idx += 1
    perm = []
    for j in range(d):
        for i in range(j + 1):
            perm.append(pos[(i, j)])
    return np.asarray(perm)


def _solve_clarabel(conic: ConicForm, opts: SolverOptions) -> SolveReport:
    try:
        import clarabel
        from scipy import sparse
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("solver.backend='external' needs the clarabel package") from exc

    N = conic.n_reduced
    perm_rows = []
    off = 0
    for d in conic.dims:
        perm_rows.append(off + _clarabel_perm(d))
        off += svec_len(d)
    perm = np.concatenate(perm_rows) if perm_rows else np.zeros(0, dtype=int)

    Gp = conic.G[perm]
    hp = conic.h[perm]
    Amat = sparse.csc_matrix(np.vstack([conic.A, Gp]))
    bvec = np.concatenate([conic.b, hp])
    cones = []
    if conic.A.shape[0]:
        cones.append(clarabel.ZeroConeT(conic.A.shape[0]))
    cones.extend(clarabel.PSDTriangleConeT(d) for d in conic.dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iter
    solver = clarabel.DefaultSolver(sparse.csc_matrix((N, N)), conic.c,
                                    Amat, bvec, cones, settings)
    sol = solver.solve()
    name = str(sol.status)
    p = conic.A.shape[0]
    zfull = np.asarray(sol.z, dtype=float)
    zcone = np.zeros(conic.G.shape[0])
    zcone[perm] = zfull[p:]
    if name in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x, dtype=float)
        cone = _Cone(conic.dims)
        slack = conic.h - conic.G @ x
        viol = 0.0
        for d, vb in cone.blocks(slack):
            viol = max(viol, -float(np.linalg.eigvalsh(cone.smat(d, vb))[0]))
        pres = max(viol, 0.0) / (1.0 + np.abs(conic.h).max(initial=0.0))
        if p:
            pres = max(pres, np.abs(conic.A @ x - conic.b).max()
                       / (1.0 + np.abs(conic.b).max(initial=0.0)))
        status = "Optimal" if name == "Solved" else "NumericalTrouble"
        dobj = -float(np.concatenate([conic.b, hp]) @ zfull)
        return SolveReport(status=status, x=x,
                           objective=float(conic.c @ x) + conic.obj_const,
                           dual_objective=dobj + conic.obj_const,
                           residuals={"feas": float(pres), "gap": 0.0},
                           iterations=int(sol.iterations), backend="external")
    if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        cert = {"kind": "primal_infeasibility", "y": zfull[:p], "z": zcone}
        res = infeasibility_residual(conic, cert)
        if res <= 1e-7:
            cert["residual"] = float(res)
            denom = -(float(conic.b @ zfull[:p]) if p else 0.0) - float(conic.h @ zcone)
            cert["y"], cert["z"] = zfull[:p] / denom, zcone / denom
            return SolveReport(status="Infeasible", x=None, objective=None,
                               residuals={"feas": res, "gap": 0.0},
                               iterations=int(sol.iterations),
                               certificate=cert, backend="external")
        return SolveReport(status="NumericalTrouble", x=None, objective=None,
                           iterations=int(sol.iterations), backend="external")
    if name in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveReport(status="Unbounded", x=None, objective=None,
                           iterations=int(sol.iterations),
                           certificate={"kind": "unboundedness",
                                        "x": np.asarray(sol.x, dtype=float)},
                           backend="external")
    return SolveReport(status="NumericalTrouble", x=None, objective=None,
                       iterations=int(getattr(sol, "iterations", 0)), backend="external")
