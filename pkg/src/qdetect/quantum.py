"""Open-quantum decision core.

An agent deciding among A actions while uncertain over n world states carries a
psychological state: a density operator on the d = n*A dimensional space whose
basis vectors are (state, action) pairs in state-major order. Its evolution
blends a coherent part (block Hamiltonian of ones) with a dissipative part
whose jump rates come from a cognitive matrix: a convex mix of utility-driven
choice rates and belief-driven rates. The observable output is the steady-state
action distribution.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    InvalidModel,
    NonConvergence,
    NumericalFailure,
    UnsupportedParameter,
)


@dataclass(frozen=True)
class PsychParams:
    """Evolution parameters: dissipation weight alpha, choice sharpness lam,
    belief-coupling weight phi."""

    alpha: float
    lam: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise InvalidModel(f"alpha must be in [0,1], got {self.alpha}")
        if not (0.0 <= self.phi <= 1.0):
            raise InvalidModel(f"phi must be in [0,1], got {self.phi}")
        if not (self.lam >= 0.0):
            raise InvalidModel(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class DecisionFrame:
    """State/action spaces and the strictly positive utility table u(a | x),
    shaped (n_actions, n_states)."""

    n_states: int
    n_actions: int
    utility: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.utility, dtype=float)
        object.__setattr__(self, "utility", u)
        if self.n_states < 1 or self.n_actions < 1:
            raise InvalidModel("need at least one state and one action")
        if u.shape != (self.n_actions, self.n_states):
            raise InvalidModel(
                f"utility must be (n_actions, n_states) = "
                f"({self.n_actions}, {self.n_states}), got {u.shape}"
            )
        if not np.all(u > 0):
            raise InvalidModel("utilities must be strictly positive")

    @property
    def dim(self):
        return self.n_states * self.n_actions


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the steady-state solver and density checks."""

    null_tol: float = 1e-9
    probe_t0: float = 50.0
    probe_tol: float = 1e-8
    max_probe_doublings: int = 20
    herm_tol: float = 1e-10
    trace_tol: float = 1e-10
    psd_tol: float = 1e-9


DEFAULT_SOLVER = SolverConfig()


def check_belief(eta, n):
    """Validate a length-n belief vector (nonnegative, sums to 1)."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (n,):
        raise InvalidModel(f"belief must have length {n}, got shape {eta.shape}")
    if np.any(eta < -1e-12):
        raise InvalidModel(f"belief has negative entries: {eta}")
    if abs(eta.sum() - 1.0) > 1e-12:
        raise InvalidModel(f"belief must sum to 1, got {eta.sum()!r}")
    return np.clip(eta, 0.0, None)


def check_density(rho, solver=DEFAULT_SOLVER):
    """Validate a density operator: Hermitian, unit trace, PSD up to tolerance."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidModel(f"density operator must be square, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > solver.herm_tol:
        raise InvalidModel("density operator is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > solver.trace_tol or abs(np.trace(rho).imag) > solver.trace_tol:
        raise InvalidModel(f"density operator trace is {np.trace(rho)}, not 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -solver.psd_tol:
        raise InvalidModel(f"density operator has eigenvalue {w.min()} < 0")
    return rho


def maximally_mixed(frame):
    d = frame.dim
    return np.eye(d, dtype=complex) / d


def subjective_choice_matrix(frame, lam):
    """Utility-driven choice rates: block-diagonal, one (A x A) block per state,
    each block's rows replicating p(a | x) = u(a|x)^lam / sum_j u(j|x)^lam.

    Powers are computed in log space so large lam does not overflow.
    """
    if lam < 0:
        raise InvalidModel(f"lam must be >= 0, got {lam}")
    A, n = frame.n_actions, frame.n_states
    logits = lam * np.log(frame.utility)            # (A, n)
    logits -= logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    p = w / w.sum(axis=0, keepdims=True)            # p[a, x]
    if not np.all(np.isfinite(p)):
        raise NumericalFailure(f"choice probabilities not finite at lam={lam}")
    d = frame.dim
    Pi = np.zeros((d, d))
    for x in range(n):
        blk = slice(x * A, (x + 1) * A)
        Pi[blk, blk] = np.tile(p[:, x], (A, 1))
    return Pi


def belief_matrix(frame, eta):
    """Belief-driven rates: entry (r, c) equals eta(state of column c) when rows
    r and c share the same action, else 0."""
    eta = check_belief(eta, frame.n_states)
    A = frame.n_actions
    d = frame.dim
    acts = np.arange(d) % A
    states = np.arange(d) // A
    return (acts[:, None] == acts[None, :]) * eta[states][None, :]


def cognitive_matrix(frame, params, eta):
    """Jump-rate matrix C = (1 - phi) * Pi(lam)^T + phi * B(eta)^T.

    Entry (m, n) is the rate of the n -> m jump."""
    Pi = subjective_choice_matrix(frame, params.lam)
    B = belief_matrix(frame, eta)
    return (1.0 - params.phi) * Pi.T + params.phi * B.T


def hamiltonian(frame):
    """Coherent coupling: block-diagonal matrix of all-ones (A x A) blocks,
    one per state."""
    d, A = frame.dim, frame.n_actions
    states = np.arange(d) // A
    return (states[:, None] == states[None, :]).astype(float)


def _dissipator(gamma):
    """Superoperator of the jump dissipator with elementwise rates gamma[m, n]
    for jumps n -> m, acting on row-major vectorized density operators."""
    d = gamma.shape[0]
    g = gamma.sum(axis=0)                           # total outflow per source
    S = np.zeros((d * d, d * d))
    idx = np.arange(d) * (d + 1)                    # positions of diagonal entries
    S[np.ix_(idx, idx)] = gamma
    S -= 0.5 * (np.kron(np.diag(g), np.eye(d)) + np.kron(np.eye(d), np.diag(g)))
    return S


def assemble_lindbladian(frame, params, eta):
    """Vectorized generator: -i(1-alpha)[H, .] plus alpha times the jump
    dissipator with rates from the cognitive matrix. Acts on row-major
    vectorized density operators; shape (d^2, d^2)."""
    d = frame.dim
    H = hamiltonian(frame)
    gamma = cognitive_matrix(frame, params, eta)
    coh = -1j * (1.0 - params.alpha) * (np.kron(H, np.eye(d)) - np.kron(np.eye(d), H.T))
    return coh + params.alpha * _dissipator(gamma)


def apply_superoperator(superop, rho):
    """Apply a vectorized generator to a density operator."""
    d = rho.shape[0]
    return (superop @ rho.reshape(-1)).reshape(d, d)


def evolve(superop, rho0, t, solver=DEFAULT_SOLVER):
    """Propagate rho0 for time t >= 0 under the generator."""
    if t < 0:
        raise InvalidModel(f"time must be >= 0, got {t}")
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    rho_t = (expm(superop * t) @ rho0.reshape(-1)).reshape(d, d)
    if not np.all(np.isfinite(rho_t)):
        raise NumericalFailure(f"evolution produced non-finite entries at t={t}")
    return 0.5 * (rho_t + rho_t.conj().T)


def action_marginal(rho, frame):
    """Probabilities of each action: diagonal populations summed over states."""
    diag = np.real(np.diag(rho))
    probs = diag.reshape(frame.n_states, frame.n_actions).sum(axis=0)
    return _finalize_distribution(probs)


def _finalize_distribution(probs):
    if probs.min() < -1e-12:
        raise NumericalFailure(f"action distribution has entry {probs.min()} < 0")
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise NumericalFailure(f"action distribution sums to {total}, not 1")
    return probs / total


def _steady_rho_from_probes(superop, frame, solver):
    """Long-time evolution fallback from the maximally mixed start; probes at
    t and 2t must agree elementwise before the result is accepted."""
    d = frame.dim
    v = maximally_mixed(frame).reshape(-1)
    t = solver.probe_t0
    probe = (expm(superop * t) @ v).reshape(d, d)
    for _ in range(solver.max_probe_doublings):
        probe2 = (expm(superop * (2 * t)) @ v).reshape(d, d)
        if np.abs(probe - probe2).max() <= solver.probe_tol:
            rho = 0.5 * (probe2 + probe2.conj().T)
            return rho / np.trace(rho).real
        probe, t = probe2, 2 * t
    raise NonConvergence(
        f"steady-state probes did not settle by t={t}",
        probes=(probe, probe2),
    )


def steady_state_distribution(frame, params, eta, solver=DEFAULT_SOLVER):
    """Long-run action distribution of the evolution at belief eta.

    Primary method: eigendecomposition of the generator, selecting the
    one-dimensional null space. If the null space is degenerate or empty at
    tolerance, fall back to long-time evolution from the maximally mixed state.
    """
    if params.alpha <= 0.0:
        raise UnsupportedParameter(
            "steady state requires alpha > 0 (purely coherent evolution does not settle)"
        )
    superop = assemble_lindbladian(frame, params, eta)
    w, V = np.linalg.eig(superop)
    null = np.abs(w) <= solver.null_tol
    if null.sum() == 1:
        d = frame.dim
        rho = V[:, np.argmax(null)].reshape(d, d)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr) < 1e-14:
            raise NumericalFailure("null-space candidate has zero trace")
        rho = rho / tr
    else:
        rho = _steady_rho_from_probes(superop, frame, solver)
    return action_marginal(rho, frame)


class ActionMap:
    """Steady-state action distributions as a function of belief, for a fixed
    frame and parameter set.

    The generator is affine in the belief vector, so it is assembled once as a
    base part plus one part per state and evaluated for many beliefs with a
    single batched eigendecomposition.
    """

    def __init__(self, frame, params, solver=DEFAULT_SOLVER):
        if params.alpha <= 0.0:
            raise UnsupportedParameter("ActionMap requires alpha > 0")
        self.frame = frame
        self.params = params
        self.solver = solver
        d = frame.dim
        H = hamiltonian(frame)
        Pi = subjective_choice_matrix(frame, params.lam)
        coh = -1j * (1.0 - params.alpha) * (np.kron(H, np.eye(d)) - np.kron(np.eye(d), H.T))
        self._base = coh + params.alpha * _dissipator((1.0 - params.phi) * Pi.T)
        self._belief_parts = []
        for s in range(frame.n_states):
            e = np.zeros(frame.n_states)
            e[s] = 1.0
            B = belief_matrix(frame, e)
            self._belief_parts.append(params.alpha * _dissipator(params.phi * B.T))
        self._belief_parts = np.stack(self._belief_parts)

    def generator(self, eta):
        eta = check_belief(eta, self.frame.n_states)
        return self._base + np.tensordot(eta, self._belief_parts, axes=1)

    def __call__(self, eta):
        return self.batch(np.asarray(eta, dtype=float)[None, :])[0]

    def batch(self, etas):
        """Steady-state distributions for a stack of beliefs, shape (m, n)."""
        etas = np.asarray(etas, dtype=float)
        m = etas.shape[0]
        gens = self._base[None, :, :] + np.tensordot(etas, self._belief_parts, axes=(1, 0))
        w, V = np.linalg.eig(gens)
        null_counts = (np.abs(w) <= self.solver.null_tol).sum(axis=1)
        d = self.frame.dim
        out = np.empty((m, self.frame.n_actions))
        simple = null_counts == 1
        if simple.any():
            pick = np.argmin(np.abs(w[simple]), axis=1)
            vecs = np.take_along_axis(V[simple], pick[:, None, None], axis=2)[:, :, 0]
            rhos = vecs.reshape(-1, d, d)
            rhos = 0.5 * (rhos + np.conj(np.swapaxes(rhos, 1, 2)))
            traces = np.trace(rhos, axis1=1, axis2=2).real
            if np.any(np.abs(traces) < 1e-14):
                raise NumericalFailure("null-space candidate has zero trace")
            rhos /= traces[:, None, None]
            diags = np.real(np.diagonal(rhos, axis1=1, axis2=2))
            probs = diags.reshape(-1, self.frame.n_states, self.frame.n_actions).sum(axis=1)
            out[simple] = np.stack([_finalize_distribution(p) for p in probs])
        for i in np.flatnonzero(~simple):
            rho = _steady_rho_from_probes(gens[i], self.frame, self.solver)
            out[i] = action_marginal(rho, self.frame)
        return out
