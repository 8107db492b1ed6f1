"""Stopping-solver tests.

The main oracle is a one-step analysis of the PD regime: with p = 0.95 every
post-continuation belief already lies in the stop region, so the continuation
value is exactly d pi + f (1 - p)(1 - pi) and the stop/continue crossing sits
at pi* = f p / (d + f p). The solver must place its grid threshold at the
first grid point at or above pi*, independent of the action channel.
"""

import numpy as np
import pytest

from qdetect import (
    BeliefGrid,
    ChangeModel,
    DetectionCosts,
    NonConvergence,
    ObservationModel,
    Policy,
    always_stop_policy,
    build_action_kernel,
    classical_value_iteration,
    evaluate_policy,
    extract_threshold,
    value_iteration,
)
from qdetect.stopping import _action_transitions


def one_step_crossing(costs, change):
    return costs.f * change.p / (costs.d + costs.f * change.p)


def test_zero_false_alarm_cost_stops_everywhere(pd_kernel_small, pd_change):
    costs = DetectionCosts(f=0.0, d=1.0)
    table, policy = value_iteration(pd_kernel_small, pd_change, costs)
    np.testing.assert_array_equal(table.values, 0.0)
    np.testing.assert_array_equal(policy.u, 1)
    assert policy.threshold == 0.0
    assert policy.crossings == 0


def test_value_bounds(pd_kernel_small, pd_change, pd_costs):
    table, _ = value_iteration(pd_kernel_small, pd_change, pd_costs)
    stop_cost = pd_costs.f * (1.0 - table.points)
    assert table.values[-1] == 0.0
    assert (table.values >= 0.0).all()
    assert (table.values <= stop_cost + 1e-12).all()


def test_threshold_matches_one_step_analysis(
    pd_kernel_full, pd_change, pd_costs
):
    table, policy = value_iteration(pd_kernel_full, pd_change, pd_costs)
    # pi* = 5 * 0.95 / (1 + 5 * 0.95) = 19/23 = 0.82608...; N = 1000 grid
    assert policy.threshold is not None
    assert abs(policy.threshold - 0.827) <= 1e-9
    assert policy.crossings == 1
    assert table.sweeps == 3
    # V(0): continuing from certainty of no change costs f (1 - p)
    assert abs(table.at(0.0) - 0.25) <= 1e-9


def test_threshold_formula_across_costs(
    pd_kernel_small, pd_change
):
    step = 1.0 / pd_kernel_small.grid.n_cells
    for f in (1.0, 2.0, 5.0, 8.0):
        costs = DetectionCosts(f=f, d=1.0)
        _, policy = value_iteration(pd_kernel_small, pd_change, costs)
        pistar = one_step_crossing(costs, pd_change)
        assert policy.threshold is not None
        assert policy.threshold >= pistar - 1e-12
        assert policy.threshold - pistar <= step + 1e-12


def test_classical_detector_reference(
    pd_kernel_full, pd_change, pd_obs, pd_costs
):
    qt, qp = value_iteration(pd_kernel_full, pd_change, pd_costs)
    ct, cp = classical_value_iteration(
        pd_change, pd_obs, pd_costs, pd_kernel_full.grid
    )
    # seeing raw observations can only help, so Vc never exceeds Vq
    assert np.max(ct.values - qt.values) <= 1e-6
    assert cp.threshold == qp.threshold


def test_classical_blind_recursion(pd_change, pd_costs):
    # uninformative observations collapse the update to the prediction;
    # replicate that recursion directly
    grid = BeliefGrid(150)
    obs = ObservationModel(np.full((2, 4), 0.25))
    table, _ = classical_value_iteration(
        pd_change, obs, pd_costs, grid, tol=1e-10
    )
    g = grid.points
    pred1 = g + pd_change.p * (1.0 - g)
    V = np.zeros_like(g)
    for _ in range(100000):
        Vn = np.minimum(
            pd_costs.f * (1.0 - g), pd_costs.d * g + np.interp(pred1, g, V)
        )
        delta = np.abs(Vn - V).max()
        V = Vn
        if delta <= 1e-10:
            break
    assert np.abs(table.values - V).max() <= 1e-8


def test_extract_threshold_cases():
    pts = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    assert extract_threshold(pts, [1, 1, 1, 1, 1]) == (0.0, 0)
    assert extract_threshold(pts, [2, 2, 2, 2, 2]) == (None, 0)
    assert extract_threshold(pts, [2, 2, 1, 1, 1]) == (0.5, 1)
    assert extract_threshold(pts, [1, 2, 2, 2, 1]) == (None, 2)
    assert extract_threshold(pts, [2, 1, 1, 2, 2]) == (None, 2)


def test_policy_decide(pd_kernel_full, pd_change, pd_costs):
    _, policy = value_iteration(pd_kernel_full, pd_change, pd_costs)
    thr = policy.threshold
    assert policy.decide(thr) == 1
    assert policy.decide(thr - 1e-13) == 1      # guard band
    assert policy.decide(thr - 0.01) == 2
    assert policy.decide(1.0) == 1
    assert policy.decide(0.0) == 2

    pts = np.array([0.0, 0.5, 1.0])
    patchy = Policy(points=pts, u=np.array([1, 2, 1]), threshold=None, crossings=2)
    assert patchy.decide(0.1) == 1              # nearest grid point
    assert patchy.decide(0.6) == 2
    assert patchy.decide(0.9) == 1


def test_evaluate_always_stop_exact(pd_kernel_small, pd_change, pd_costs):
    policy = always_stop_policy(pd_kernel_small.grid)
    table = evaluate_policy(pd_kernel_small, pd_change, pd_costs, policy)
    np.testing.assert_array_equal(
        table.values, pd_costs.f * (1.0 - table.points)
    )


def test_evaluate_optimal_matches_value_iteration(
    pd_kernel_small, pd_change, pd_costs
):
    table, policy = value_iteration(pd_kernel_small, pd_change, pd_costs)
    ev = evaluate_policy(pd_kernel_small, pd_change, pd_costs, policy)
    assert np.abs(ev.values - table.values).max() <= 5e-8


def test_bellman_identity_at_fixed_point(pd_kernel_small, pd_change, pd_costs):
    table, _ = value_iteration(
        pd_kernel_small, pd_change, pd_costs, tol=1e-12
    )
    pts = table.points
    t1, weights = _action_transitions(pd_kernel_small, pd_change)
    cont = pd_costs.d * pts + sum(
        w * np.interp(t, pts, table.values) for t, w in zip(t1, weights)
    )
    backup = np.minimum(pd_costs.f * (1.0 - pts), cont)
    assert np.abs(backup - table.values).max() <= 1e-9


def test_cost_scaling(pd_kernel_small, pd_change):
    c1 = DetectionCosts(f=5.0, d=1.0)
    c3 = DetectionCosts(f=15.0, d=3.0)
    t1_, p1 = value_iteration(pd_kernel_small, pd_change, c1, tol=1e-12)
    t3, p3 = value_iteration(pd_kernel_small, pd_change, c3, tol=1e-12)
    np.testing.assert_allclose(3.0 * t1_.values, t3.values, atol=1e-8)
    assert p1.threshold == p3.threshold


def test_slow_change_contraction(pd_frame, pd_params, pd_obs, pd_costs):
    # p = 0.05 stretches convergence out far enough to watch the sweep
    # deltas decay; replicate the iteration and compare
    change = ChangeModel(p=0.05)
    kernel = build_action_kernel(
        pd_frame, pd_params, change, pd_obs, BeliefGrid(100)
    )
    table, _ = value_iteration(kernel, change, pd_costs)

    pts = kernel.grid.points
    t1, weights = _action_transitions(kernel, change)
    V = np.zeros_like(pts)
    deltas = []
    for _ in range(10000):
        cont = pd_costs.d * pts + sum(
            w * np.interp(t, pts, V) for t, w in zip(t1, weights)
        )
        Vn = np.minimum(pd_costs.f * (1.0 - pts), cont)
        deltas.append(np.abs(Vn - V).max())
        V = Vn
        if deltas[-1] <= 1e-8:
            break
    assert table.sweeps == len(deltas) == 18
    tail = np.asarray(deltas[1:])
    assert (np.diff(tail) <= 1e-12).all()
    assert np.abs(V - table.values).max() <= 1e-12


def test_nonconvergence_reports_delta(pd_kernel_small, pd_change, pd_costs):
    with pytest.raises(NonConvergence) as exc:
        value_iteration(
            pd_kernel_small, pd_change, pd_costs, tol=1e-15, max_iter=1
        )
    assert exc.value.last_delta > 0.0
