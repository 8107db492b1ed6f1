"""Bayesian quickest-detection solver on a discretized belief grid.

The detector watches belief pi(1) in the changed state and each step either
stops (u = 1) or continues (u = 2). Stopping before the change costs f,
every step after the change costs d. Value iteration solves

    V(pi) = min( f (1 - pi),  d pi + E[ V(T_bar(pi, a)) ] )

with expectations under the one-step action (or observation) likelihoods and
V read off the grid by linear interpolation. Ties break toward stopping.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel, NonConvergence


@dataclass(frozen=True)
class ValueTable:
    """Optimal (or fixed-policy) expected cost at each grid value of pi(1)."""

    points: np.ndarray
    values: np.ndarray
    sweeps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.points.shape != self.values.shape:
            raise InvalidModel("points and values must align")

    def at(self, pi1):
        return float(np.interp(pi1, self.points, self.values))


@dataclass(frozen=True)
class Policy:
    """Stop/continue decision at each grid point, with the stop threshold when
    the stop set is a single upper interval of pi(1)."""

    points: np.ndarray
    u: np.ndarray
    threshold: float | None
    crossings: int

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=int))
        if self.points.shape != self.u.shape:
            raise InvalidModel("points and decisions must align")
        if not np.all(np.isin(self.u, (1, 2))):
            raise InvalidModel("decisions must be 1 (stop) or 2 (continue)")

    def decide(self, pi1):
        """Decision at an arbitrary belief: by threshold when one exists,
        otherwise the nearest grid point's decision."""
        if self.threshold is not None:
            return 1 if pi1 >= self.threshold - 1e-12 else 2
        idx = int(np.argmin(np.abs(self.points - pi1)))
        return int(self.u[idx])


def always_stop_policy(grid):
    pts = grid.points
    return Policy(points=pts, u=np.ones(pts.size, dtype=int), threshold=0.0, crossings=0)


def _action_transitions(kernel, change):
    """Per-action posterior pi(1) and marginal likelihood at each grid point.

    Returns (tbar1, sbar) with shape (n_actions, npts). Zero-likelihood
    actions get the prediction as a placeholder posterior; they carry zero
    weight in the expectation.
    """
    g = kernel.grid.points
    pred1 = g + change.p * (1.0 - g)
    pred2 = (1.0 - change.p) * (1.0 - g)
    num = kernel.table[0] * pred1[:, None]        # (npts, A)
    den = num + kernel.table[1] * pred2[:, None]
    safe = den > 0
    tbar1 = np.where(safe, num / np.where(safe, den, 1.0), pred1[:, None])
    return tbar1.T, den.T


def _observation_transitions(obs, change, grid):
    """Same as _action_transitions but for the raw observation channel."""
    g = grid.points
    pred1 = g + change.p * (1.0 - g)
    pred2 = (1.0 - change.p) * (1.0 - g)
    num = np.outer(obs.B[0], pred1)               # (n_obs, npts)
    den = num + np.outer(obs.B[1], pred2)
    safe = den > 0
    t1 = np.where(safe, num / np.where(safe, den, 1.0), pred1[None, :])
    return t1, den


def _iterate(points, t1, weights, costs, tol, max_iter):
    stop_cost = costs.f * (1.0 - points)
    delay_cost = costs.d * points
    V = np.zeros_like(points)
    delta = np.inf
    for sweep in range(1, max_iter + 1):
        cont = delay_cost + sum(
            w * np.interp(t, points, V) for t, w in zip(t1, weights)
        )
        Vn = np.minimum(stop_cost, cont)
        delta = np.abs(Vn - V).max()
        V = Vn
        if delta <= tol:
            break
    else:
        raise NonConvergence(
            f"value iteration missed tolerance {tol} after {max_iter} sweeps",
            last_delta=float(delta),
        )
    cont = delay_cost + sum(w * np.interp(t, points, V) for t, w in zip(t1, weights))
    u = np.where(stop_cost <= cont, 1, 2)
    return V, u, sweep


def value_iteration(kernel, change, costs, tol=1e-8, max_iter=10000):
    """Solve the detector's stopping problem on the kernel's grid.

    Returns the value table and the greedy policy with its threshold.
    """
    points = kernel.grid.points
    t1, weights = _action_transitions(kernel, change)
    V, u, sweeps = _iterate(points, t1, weights, costs, tol, max_iter)
    threshold, crossings = extract_threshold(points, u)
    return (
        ValueTable(points=points, values=V, sweeps=sweeps),
        Policy(points=points, u=u, threshold=threshold, crossings=crossings),
    )


def classical_value_iteration(change, obs, costs, grid, tol=1e-8, max_iter=10000):
    """Reference solver for a detector that sees the observations directly."""
    points = grid.points
    t1, weights = _observation_transitions(obs, change, grid)
    V, u, sweeps = _iterate(points, t1, weights, costs, tol, max_iter)
    threshold, crossings = extract_threshold(points, u)
    return (
        ValueTable(points=points, values=V, sweeps=sweeps),
        Policy(points=points, u=u, threshold=threshold, crossings=crossings),
    )


def extract_threshold(points, u):
    """Smallest grid point with u = 1 when the stop set is an upper interval.

    Returns (threshold, crossing_count); threshold is None when the policy
    never stops or the stop set is not a single upper interval.
    """
    u = np.asarray(u, dtype=int)
    crossings = int(np.count_nonzero(u[1:] != u[:-1]))
    stop_idx = np.flatnonzero(u == 1)
    if stop_idx.size == 0:
        return None, crossings
    if crossings == 0 or (crossings == 1 and u[-1] == 1):
        return float(points[stop_idx[0]]), crossings
    return None, crossings


def evaluate_policy(kernel, change, costs, policy, tol=1e-8, max_iter=10000):
    """Expected cost of a fixed policy on the kernel's grid.

    Stop points carry exactly f (1 - pi); continuation points take the
    one-step expectation under the same transitions as value_iteration.
    """
    points = kernel.grid.points
    t1, weights = _action_transitions(kernel, change)
    stop_cost = costs.f * (1.0 - points)
    delay_cost = costs.d * points
    stop_mask = np.array([policy.decide(p) == 1 for p in points])
    V = np.where(stop_mask, stop_cost, 0.0)
    delta = np.inf
    for sweep in range(1, max_iter + 1):
        cont = delay_cost + sum(
            w * np.interp(t, points, V) for t, w in zip(t1, weights)
        )
        Vn = np.where(stop_mask, stop_cost, cont)
        delta = np.abs(Vn - V).max()
        V = Vn
        if delta <= tol:
            return ValueTable(points=points, values=V, sweeps=sweep)
    raise NonConvergence(
        f"policy evaluation missed tolerance {tol} after {max_iter} sweeps",
        last_delta=float(delta),
    )
