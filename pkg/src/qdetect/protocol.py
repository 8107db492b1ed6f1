"""Two-layer filtering protocol between a hidden change process and an
observer who only sees decisions.

A two-state Markov chain jumps once into an absorbing changed state. A sensor
sees noisy observations of the chain, keeps a private Bayesian belief, and
hands that belief to a decision agent whose action distribution is the quantum
core's steady state. A detector sees only the actions and runs its own filter
through a belief-indexed action-likelihood kernel.

State 1 is the changed (absorbing) state, state 2 the initial one. The
parameter p is the per-step probability that the change occurs, so the change
time is geometric(p) with mean 1/p.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ImpossibleAction,
    ImpossibleObservation,
    InvalidModel,
    RunawayEpisode,
)
from .quantum import DEFAULT_SOLVER, ActionMap, check_belief


@dataclass(frozen=True)
class ChangeModel:
    """Absorbing two-state chain: P = [[1, 0], [p, 1-p]], initial belief (0, 1)."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise InvalidModel(f"p must be in (0,1], got {self.p}")

    @property
    def P(self):
        return np.array([[1.0, 0.0], [self.p, 1.0 - self.p]])

    @property
    def pi0(self):
        return np.array([0.0, 1.0])

    @property
    def mean_change_time(self):
        return 1.0 / self.p

    def predict(self, pi):
        """One-step prior P' pi over the next state."""
        pi = np.asarray(pi, dtype=float)
        return np.array([pi[0] + self.p * pi[1], (1.0 - self.p) * pi[1]])


@dataclass(frozen=True)
class ObservationModel:
    """Observation likelihood table B[x-1, y-1] = p(y | x), rows summing to 1."""

    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        object.__setattr__(self, "B", B)
        if B.ndim != 2 or B.shape[0] != 2:
            raise InvalidModel(f"B must be 2 x n_obs, got {B.shape}")
        if np.any(B < 0):
            raise InvalidModel("observation likelihoods must be >= 0")
        if np.abs(B.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvalidModel("each row of B must sum to 1")

    @property
    def n_obs(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class DetectionCosts:
    """False alarm penalty f and per-step delay penalty d."""

    f: float
    d: float

    def __post_init__(self):
        if not (np.isfinite(self.f) and np.isfinite(self.d)):
            raise InvalidModel("costs must be finite")
        if self.f < 0 or self.d < 0:
            raise InvalidModel("costs must be >= 0")


@dataclass(frozen=True)
class BeliefGrid:
    """N+1 uniformly spaced values of pi(1) on [0, 1]."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise InvalidModel(f"grid needs at least one cell, got {self.n_cells}")

    @property
    def points(self):
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @property
    def size(self):
        return self.n_cells + 1


@dataclass(frozen=True)
class ParameterMixture:
    """Finite mixture of parameter points with nonnegative weights summing to 1."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise InvalidModel("mixture needs at least one atom")
        w = np.array([weight for _, weight in atoms], dtype=float)
        if np.any(w < 0):
            raise InvalidModel("mixture weights must be >= 0")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidModel(f"mixture weights must sum to 1, got {w.sum()!r}")


@dataclass(frozen=True)
class ActionKernel:
    """Action likelihoods R[x-1, i, a-1] = p(a | state x, public belief grid[i])."""

    grid: BeliefGrid
    table: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", R)
        if R.ndim != 3 or R.shape[0] != 2 or R.shape[1] != self.grid.size:
            raise InvalidModel(f"kernel table has shape {R.shape}")
        if np.any(R < 0):
            raise InvalidModel("kernel entries must be >= 0")
        if np.abs(R.sum(axis=2) - 1.0).max() > 1e-9:
            raise InvalidModel("kernel rows must sum to 1")

    @property
    def n_actions(self):
        return self.table.shape[2]

    def at(self, pi1):
        """Kernel values at an off-grid belief, linearly interpolated in pi(1);
        returns shape (2, n_actions)."""
        pts = self.grid.points
        out = np.empty((2, self.n_actions))
        for x in range(2):
            for a in range(self.n_actions):
                out[x, a] = np.interp(pi1, pts, self.table[x, :, a])
        return out


def private_belief_update(pi, y, change, obs):
    """Bayes update of the sensor's belief after observation y (1-based):
    T(pi, y) = B_y P' pi / sigma(pi, y)."""
    pi = check_belief(pi, 2)
    pred = change.predict(pi)
    like = obs.B[:, y - 1]
    post = like * pred
    sigma = post.sum()
    if sigma <= 0.0:
        raise ImpossibleObservation(
            f"observation {y} has zero likelihood at belief {pi}"
        )
    return post / sigma


def observation_likelihood(pi, y, change, obs):
    """sigma(pi, y): marginal likelihood of observation y one step ahead."""
    pred = change.predict(np.asarray(pi, dtype=float))
    return float(obs.B[:, y - 1] @ pred)


def _private_posteriors(grid_points, change, obs):
    """Posterior pi(1) values T(pi, y) for every grid point and observation.

    Where an observation is impossible (zero marginal likelihood) the
    prediction itself is used; such entries carry zero weight in any kernel
    row that can reach them.
    """
    g = np.asarray(grid_points, dtype=float)
    pred1 = g + change.p * (1.0 - g)
    pred2 = (1.0 - change.p) * (1.0 - g)
    n_obs = obs.n_obs
    eta1 = np.empty((g.size, n_obs))
    for y in range(n_obs):
        num = obs.B[0, y] * pred1
        sig = num + obs.B[1, y] * pred2
        safe = sig > 0
        eta1[:, y] = np.where(safe, num / np.where(safe, sig, 1.0), pred1)
    return eta1


def build_action_kernel(frame, params, change, obs, grid, solver=DEFAULT_SOLVER):
    """Detector-side action likelihoods on the belief grid:
    R_{x,pi}(a) = sum_y Gamma(T(pi, y))(a) B_{x,y}, with Gamma the steady-state
    action distribution at the sensor's posterior."""
    amap = ActionMap(frame, params, solver)
    return _kernel_from_map(amap, change, obs, grid)


def _kernel_from_map(amap, change, obs, grid):
    g = grid.points
    eta1 = _private_posteriors(g, change, obs)          # (npts, n_obs)
    flat = eta1.reshape(-1)
    etas = np.stack([flat, 1.0 - flat], axis=1)
    gammas = amap.batch(etas).reshape(g.size, obs.n_obs, -1)
    R = np.einsum("iya,xy->xia", gammas, obs.B)
    return ActionKernel(grid=grid, table=R)


def build_mismatched_kernel(frame, mixture, change, obs, grid, solver=DEFAULT_SOLVER):
    """Kernel under parameter uncertainty: the mixture-weighted sum of
    per-atom kernels. A single-atom mixture reduces to build_action_kernel."""
    table = None
    for params, weight in mixture.atoms:
        k = build_action_kernel(frame, params, change, obs, grid, solver)
        table = weight * k.table if table is None else table + weight * k.table
    return ActionKernel(grid=grid, table=table)


def public_belief_update(pi, a, change, kernel):
    """Detector's belief update after seeing action a (1-based):
    T_bar(pi, a) = R_pi(a) P' pi / sigma_bar(pi, a). Returns the new belief
    and sigma_bar. Off-grid beliefs read R by linear interpolation."""
    pi = check_belief(pi, 2)
    pred = change.predict(pi)
    like = kernel.at(pi[0])[:, a - 1]
    post = like * pred
    sigma_bar = post.sum()
    if sigma_bar <= 0.0:
        raise ImpossibleAction(f"action {a} has zero likelihood at belief {pi}")
    return post / sigma_bar, float(sigma_bar)


@dataclass(frozen=True)
class EpisodeTrace:
    """One simulated episode: the change time, the stop time, per-step records
    (n, x, y, eta1, a, pi1, u), and the realized cost."""

    change_time: int
    stop_time: int
    records: tuple
    cost: float


def simulate_episode(
    frame,
    params,
    change,
    obs,
    policy,
    kernel,
    seed,
    costs=None,
    action_map=None,
    step_cap=None,
    solver=DEFAULT_SOLVER,
):
    """Run the protocol once with all randomness drawn from the seed.

    Per step: the chain may jump, the sensor observes y and updates its
    private belief, the agent draws an action from the steady state at that
    private belief, the detector updates the public belief through the kernel
    and applies the policy. Stops at the first u = 1.
    """
    rng = np.random.default_rng(seed)
    amap = action_map if action_map is not None else ActionMap(frame, params, solver)
    if step_cap is None:
        step_cap = int(10 * change.mean_change_time + 1000)
    f = costs.f if costs is not None else 0.0
    d = costs.d if costs is not None else 0.0

    tau0 = int(rng.geometric(change.p))
    pi = change.pi0
    records = []
    n = 0
    while True:
        n += 1
        if n > step_cap:
            raise RunawayEpisode(f"no stop after {step_cap} steps")
        x = 1 if n >= tau0 else 2
        y = int(rng.choice(obs.n_obs, p=obs.B[x - 1])) + 1
        eta = private_belief_update(pi, y, change, obs)
        gamma = amap(eta)
        a = int(rng.choice(gamma.size, p=gamma)) + 1
        pi, _ = public_belief_update(pi, a, change, kernel)
        u = policy.decide(pi[0])
        records.append((n, x, y, float(eta[0]), a, float(pi[0]), u))
        if u == 1:
            break
    tau = n
    cost = d * max(tau - tau0, 0) + (f if tau < tau0 else 0.0)
    return EpisodeTrace(
        change_time=tau0, stop_time=tau, records=tuple(records), cost=float(cost)
    )


def estimate_cost(
    frame,
    params,
    change,
    obs,
    policy,
    kernel,
    costs,
    n_episodes,
    seed,
    solver=DEFAULT_SOLVER,
):
    """Mean realized cost and its standard error over independent episodes."""
    if n_episodes < 1:
        raise InvalidModel("need at least one episode")
    amap = ActionMap(frame, params, solver)
    child_seeds = np.random.SeedSequence(seed).spawn(n_episodes)
    realized = np.empty(n_episodes)
    for i, s in enumerate(child_seeds):
        trace = simulate_episode(
            frame, params, change, obs, policy, kernel, s,
            costs=costs, action_map=amap, solver=solver,
        )
        realized[i] = trace.cost
    mean = float(realized.mean())
    stderr = float(realized.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return mean, stderr
