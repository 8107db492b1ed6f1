"""Blackwell-style comparisons between action channels.

An action channel here is the family of steady-state action distributions a
detector faces, one distribution per observation, indexed by the public
belief. A channel dominates another when a single row-stochastic garbling
matrix M maps its distributions onto the other's for every observation at
once. This module finds such matrices, checks the convex-interpolation
properties the comparisons rely on, and turns kernel mismatch into the
KL-based robustness bound used by the sensitivity harness.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidModel
from .protocol import build_action_kernel, build_mismatched_kernel
from .quantum import DEFAULT_SOLVER, ActionMap, PsychParams
from .stopping import evaluate_policy, value_iteration


@dataclass(frozen=True)
class DominanceCertificate:
    """Row-stochastic M with gamma_hat @ M = gamma within residual."""

    M: np.ndarray
    residual: float


@dataclass(frozen=True)
class StochasticityDefect:
    """How far a matrix is from row-stochastic."""

    row_sum_dev: float
    negativity: float


@dataclass(frozen=True)
class KLBoundReport:
    """Per-grid-point check of the mismatch robustness bound."""

    K: float
    distance: float
    points: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def worst_slack(self):
        return float(np.min(self.rhs - self.lhs))


@dataclass(frozen=True)
class BetweennessReport:
    checks: int
    violations: int
    worst_margin: float


@dataclass(frozen=True)
class ParameterRegion:
    """A scanned box in (alpha, lambda, phi) with its dominance tag."""

    alpha: tuple
    lam: tuple
    phi: tuple
    classification: str
    witnesses: tuple


def stochasticity_defect(M):
    M = np.asarray(M, dtype=float)
    row_sum_dev = float(np.abs(M.sum(axis=1) - 1.0).max())
    negativity = float(max(0.0, -M.min()))
    return StochasticityDefect(row_sum_dev=row_sum_dev, negativity=negativity)


def _check_families(gamma_hat, gamma):
    ghat = np.atleast_2d(np.asarray(gamma_hat, dtype=float))
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    if ghat.shape != g.shape:
        raise InvalidModel(
            f"channel families must share shape, got {ghat.shape} vs {g.shape}"
        )
    return ghat, g


def best_transform(gamma_hat, gamma, eps=None):
    """Row-stochastic M minimizing the worst-entry residual of
    gamma_hat @ M = gamma. Returns (M, residual).

    With eps given, clear-cut cases at A=2 are settled by a least-squares
    shortcut whose feasible/infeasible verdict relative to eps is exact (the
    residual it reports is then an upper bound on the true minimum, on the
    correct side of eps). All other cases go through an LP minimizing the
    maximum residual subject to stochasticity.
    """
    ghat, g = _check_families(gamma_hat, gamma)
    m, A = ghat.shape
    if A == 2 and eps is not None:
        got = _transform_two_actions(ghat, g, eps)
        if got is not None:
            return got
    return _transform_linprog(ghat, g)


def _transform_two_actions(ghat, g, eps):
    # M = [[m1, 1-m1], [m2, 1-m2]]; matching the first column suffices.
    c = g[:, 0]
    sol, res2, rank, _ = np.linalg.lstsq(ghat, c, rcond=None)
    mvec = np.clip(sol, 0.0, 1.0)
    err = ghat @ mvec - c
    resid = float(np.abs(err).max())
    M = np.column_stack([mvec, 1.0 - mvec])
    if resid <= eps:
        return M, resid
    if rank == ghat.shape[1] and res2.size:
        # unconstrained L2 residual lower-bounds the constrained minimax:
        # t* >= ||e||_inf >= ||e||_2 / sqrt(m) for any feasible point
        lower = float(np.sqrt(res2[0] / ghat.shape[0]))
        if lower > eps:
            return M, resid
    return None


def _transform_linprog(ghat, g):
    m, A = ghat.shape
    n_vars = A * A + 1
    cost = np.zeros(n_vars)
    cost[-1] = 1.0
    # residual constraints: +/- (ghat M - g)[y, k] <= t
    rows = []
    rhs = []
    for y in range(m):
        for k in range(A):
            row = np.zeros(n_vars)
            row[k::A][:A] = ghat[y]        # M[:, k] entries sit at j*A + k
            row[-1] = -1.0
            rows.append(row)
            rhs.append(g[y, k])
            rows.append(np.concatenate([-row[:-1], [-1.0]]))
            rhs.append(-g[y, k])
    A_eq = np.zeros((A, n_vars))
    for j in range(A):
        A_eq[j, j * A : (j + 1) * A] = 1.0
    b_eq = np.ones(A)
    bounds = [(0.0, 1.0)] * (A * A) + [(0.0, None)]
    res = linprog(
        cost,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        raise InvalidModel(f"transform search failed: {res.message}")
    M = res.x[:-1].reshape(A, A)
    resid = float(np.abs(ghat @ M - g).max())
    return M, resid


def find_dominance_matrix(gamma_hat, gamma, eps=1e-6):
    """Certificate that gamma is a garbling of gamma_hat, or None.

    Searches for one row-stochastic M with gamma_hat_y @ M = gamma_y for all
    y simultaneously, within eps in the worst entry.
    """
    M, resid = best_transform(gamma_hat, gamma, eps=eps)
    if resid <= eps:
        return DominanceCertificate(M=M, residual=resid)
    return None


def convex_mixture_matrix(M1, M2, gammas):
    """Column-weighted mixture M3[:, a] = gammas[a] M1[:, a] + (1-gammas[a]) M2[:, a].

    Returns (M3, defect). The mixture preserves the garbling identity exactly
    but can break row sums, so the stochasticity defect is reported rather
    than assumed away.
    """
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    w = np.asarray(gammas, dtype=float)
    if M1.shape != M2.shape:
        raise InvalidModel(f"matrix shapes differ: {M1.shape} vs {M2.shape}")
    if w.shape != (M1.shape[1],):
        raise InvalidModel("need one weight per action column")
    if np.any(w < 0) or np.any(w > 1):
        raise InvalidModel("mixture weights must lie in [0,1]")
    M3 = w[None, :] * M1 + (1.0 - w[None, :]) * M2
    return M3, stochasticity_defect(M3)


def inverse_stochasticity_report(M):
    """Invert M and report how close the inverse is to having unit row and
    column sums. Observational only; nothing downstream assumes it."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1] or np.linalg.matrix_rank(M) < M.shape[0]:
        return {"invertible": False}
    inv = np.linalg.inv(M)
    return {
        "invertible": True,
        "inverse_row_sum_dev": float(np.abs(inv.sum(axis=1) - 1.0).max()),
        "inverse_col_sum_dev": float(np.abs(inv.sum(axis=0) - 1.0).max()),
    }


def _channel_family(frame, params, change, obs, pi_values, solver):
    """Steady action distributions Gamma_y^pi, shape (n_pi, n_obs, A)."""
    amap = ActionMap(frame, params, solver)
    g = np.asarray(pi_values, dtype=float)
    pred1 = g + change.p * (1.0 - g)
    pred2 = (1.0 - change.p) * (1.0 - g)
    etas = []
    for y in range(obs.n_obs):
        num = obs.B[0, y] * pred1
        sig = num + obs.B[1, y] * pred2
        safe = sig > 0
        e1 = np.where(safe, num / np.where(safe, sig, 1.0), pred1)
        etas.append(e1)
    e1 = np.stack(etas, axis=1).reshape(-1)
    out = amap.batch(np.stack([e1, 1.0 - e1], axis=1))
    return out.reshape(g.size, obs.n_obs, -1)


def _mix_params(p1, p2, eps):
    return PsychParams(
        alpha=eps * p1.alpha + (1.0 - eps) * p2.alpha,
        lam=eps * p1.lam + (1.0 - eps) * p2.lam,
        phi=eps * p1.phi + (1.0 - eps) * p2.phi,
    )


def interpolation_betweenness_check(
    frame,
    p1,
    p2,
    change,
    obs,
    eps_values=None,
    pi_values=None,
    tol=1e-6,
    solver=DEFAULT_SOLVER,
):
    """Check that steady action distributions interpolate between endpoints.

    For p3 = eps*p1 + (1-eps)*p2, every component of Gamma_{y,3}^pi must lie
    in the closed interval spanned by the endpoint values, within tol.
    """
    if eps_values is None:
        eps_values = np.linspace(0.1, 0.9, 9)
    if pi_values is None:
        pi_values = np.linspace(0.0, 1.0, 11)
    fam1 = _channel_family(frame, p1, change, obs, pi_values, solver)
    fam2 = _channel_family(frame, p2, change, obs, pi_values, solver)
    lo = np.minimum(fam1, fam2)
    hi = np.maximum(fam1, fam2)
    checks = 0
    violations = 0
    worst = np.inf
    for eps in np.asarray(eps_values, dtype=float):
        fam3 = _channel_family(
            frame, _mix_params(p1, p2, eps), change, obs, pi_values, solver
        )
        margin = np.minimum(fam3 - lo, hi - fam3)
        checks += margin.size
        violations += int(np.count_nonzero(margin < -tol))
        worst = min(worst, float(margin.min()))
    return BetweennessReport(checks=checks, violations=violations, worst_margin=worst)


def model_distance(kernel, kernel_hat, change):
    """sqrt(2) sup_pi max_i sum_j P_ij sqrt(KL(R_j,pi || R_hat_j,pi)).

    KL uses 0 log 0 = 0; a zero in R_hat where R is positive makes the
    distance infinite.
    """
    if kernel.grid != kernel_hat.grid or kernel.table.shape != kernel_hat.table.shape:
        raise InvalidModel("kernels must share grid and action set")
    R = kernel.table
    Rh = kernel_hat.table
    if np.any((R > 0) & (Rh == 0)):
        return float("inf")
    ratio = np.where(R > 0, R / np.where(Rh > 0, Rh, 1.0), 1.0)
    kl = np.sum(R * np.log(ratio), axis=2)                 # (2, npts)
    kl = np.maximum(kl, 0.0)
    root = np.sqrt(kl)
    P = change.P
    inner = P @ root                                       # (2, npts), rows i
    return float(np.sqrt(2.0) * inner.max())


def sensitivity_bound_check(
    frame,
    params_true,
    mixture,
    change,
    obs,
    costs,
    grid,
    tol=1e-8,
    max_iter=10000,
    solver=DEFAULT_SOLVER,
):
    """Robustness bound for running the mismatched-model policy on the truth.

    lhs = cost of the policy optimized against the mixture kernel, evaluated
    under the true kernel; rhs = true optimal cost + 2 K distance with
    K = max(f, d) / p.
    """
    kernel = build_action_kernel(frame, params_true, change, obs, grid, solver)
    kernel_hat = build_mismatched_kernel(frame, mixture, change, obs, grid, solver)
    V_true, _ = value_iteration(kernel, change, costs, tol=tol, max_iter=max_iter)
    _, pol_hat = value_iteration(kernel_hat, change, costs, tol=tol, max_iter=max_iter)
    lhs = evaluate_policy(kernel, change, costs, pol_hat, tol=tol, max_iter=max_iter)
    distance = model_distance(kernel, kernel_hat, change)
    K = max(costs.f, costs.d) / change.p
    rhs = V_true.values + 2.0 * K * distance
    return KLBoundReport(
        K=K, distance=distance, points=grid.points, lhs=lhs.values, rhs=rhs
    )


def box_grid(alpha, lam, phi, points_per_axis=5):
    """Cartesian sample of a parameter box, points_per_axis per axis."""
    axes = [
        np.linspace(lo, hi, points_per_axis) if hi > lo else np.array([lo])
        for lo, hi in (alpha, lam, phi)
    ]
    pts = []
    for a in axes[0]:
        for l in axes[1]:
            for ph in axes[2]:
                pts.append(PsychParams(alpha=float(a), lam=float(l), phi=float(ph)))
    return pts


@dataclass(frozen=True)
class ScanRow:
    """One (ref point, test point, direction) record from a region scan."""

    ref: PsychParams
    test: PsychParams
    direction: str            # "ref_to_test" or "test_to_ref"
    certified: bool
    residual: float           # worst over sampled beliefs of the best transform
    worst_V_margin: float     # min over grid of V(garbled) - V(source)


def region_scan(
    frame,
    ref_points,
    test_points,
    change,
    obs,
    costs,
    grid,
    pi_samples=11,
    eps=1e-6,
    tol=1e-8,
    max_iter=10000,
    solver=DEFAULT_SOLVER,
):
    """Pairwise dominance scan between two sampled parameter regions.

    For every (ref, test) pair and both directions, looks for a shared
    garbling matrix at each sampled belief; a direction is certified when
    every belief admits one. Certified directions also record the value
    ordering margin (garbled side should cost at least as much everywhere).

    Returns (regions, rows): two ParameterRegion tags and all pair records.
    """
    pi_values = np.linspace(0.0, 1.0, pi_samples)

    def prep(points):
        out = []
        for p in points:
            fam = _channel_family(frame, p, change, obs, pi_values, solver)
            kernel = build_action_kernel(frame, p, change, obs, grid, solver)
            V, _ = value_iteration(kernel, change, costs, tol=tol, max_iter=max_iter)
            out.append((p, fam, V.values))
        return out

    ref_data = prep(ref_points)
    test_data = prep(test_points)

    rows = []
    for p_ref, fam_ref, V_ref in ref_data:
        for p_test, fam_test, V_test in test_data:
            for direction, src_fam, dst_fam, V_src, V_dst in (
                ("ref_to_test", fam_ref, fam_test, V_ref, V_test),
                ("test_to_ref", fam_test, fam_ref, V_test, V_ref),
            ):
                worst_resid = 0.0
                ok = True
                for i in range(pi_values.size):
                    _, resid = best_transform(src_fam[i], dst_fam[i], eps=eps)
                    worst_resid = max(worst_resid, resid)
                    if resid > eps:
                        ok = False
                margin = float(np.min(V_dst - V_src))
                rows.append(
                    ScanRow(
                        ref=p_ref,
                        test=p_test,
                        direction=direction,
                        certified=ok,
                        residual=float(worst_resid),
                        worst_V_margin=margin,
                    )
                )

    def bounds(points):
        al = [p.alpha for p in points]
        lm = [p.lam for p in points]
        ph = [p.phi for p in points]
        return (min(al), max(al)), (min(lm), max(lm)), (min(ph), max(ph))

    fwd = [r for r in rows if r.direction == "ref_to_test"]
    bwd = [r for r in rows if r.direction == "test_to_ref"]
    ref_dominates = all(r.certified for r in fwd)
    test_dominates = all(r.certified for r in bwd)

    def tag(dominates, dominated_by):
        if dominates:
            return "dominating"
        if dominated_by:
            return "dominated"
        return "unresolved"

    ref_b = bounds(ref_points)
    test_b = bounds(test_points)
    regions = [
        ParameterRegion(
            alpha=ref_b[0], lam=ref_b[1], phi=ref_b[2],
            classification=tag(ref_dominates, test_dominates),
            witnesses=tuple(r for r in fwd if r.certified)[:3],
        ),
        ParameterRegion(
            alpha=test_b[0], lam=test_b[1], phi=test_b[2],
            classification=tag(test_dominates, ref_dominates),
            witnesses=tuple(r for r in bwd if r.certified)[:3],
        ),
    ]
    return regions, rows
