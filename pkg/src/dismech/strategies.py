"""Follower strategies: honest programs and the bundled deviations.

A *stance* is a declarative choice of behavior (honest, misreport, constant,
quantity leader) that a mechanism runner turns into a concrete follower
program for its own report schema.  The program classes live here too; all of
them are causal: a round-k report depends only on the agent's type, leader
broadcasts up to k-1, and neighbor reports before k.
"""

from dataclasses import dataclass

import numpy as np

from .core import argmin_augmented, evaluate_cost
from .errors import StrategyError
from .protocol import Strategy

__all__ = [
    "Honest",
    "Misreport",
    "QuantityLeader",
    "ConstantReport",
    "honest",
    "misreport",
    "stackelberg",
    "constant",
    "HonestDDFollower",
    "StackelbergDDFollower",
    "ConstantDDFollower",
    "EdgeDualFollower",
    "AveragingFollower",
    "ConstantConsensusFollower",
]


# ---------------------------------------------------------------------------
# Stances (scenario-facing declarations)


@dataclass(frozen=True)
class Honest:
    """Follow the suggested slave algorithm truthfully."""


@dataclass(frozen=True)
class Misreport:
    """Run the honest algorithm parameterized by a fake type."""

    fake: tuple

    def fake_vector(self):
        return np.asarray(self.fake, dtype=float)


@dataclass(frozen=True)
class QuantityLeader:
    """Stackelberg deviation: optimize against the estimated price reaction."""

    inner_tol: float = 1e-8


@dataclass(frozen=True)
class ConstantReport:
    """Report the same proposal every round, ignoring all broadcasts."""

    value: tuple

    def value_vector(self):
        return np.asarray(self.value, dtype=float)


def honest():
    return Honest()


def misreport(fake):
    return Misreport(fake=tuple(np.atleast_1d(np.asarray(fake, dtype=float)).tolist()))


def stackelberg(inner_tol=1e-8):
    return QuantityLeader(inner_tol=inner_tol)


def constant(value):
    return ConstantReport(value=tuple(np.atleast_1d(np.asarray(value, dtype=float)).tolist()))


# ---------------------------------------------------------------------------
# Dual-decomposition follower programs (report schema: v, x_hat, v_hat)


def _dd_payload(v, x_hat, v_hat):
    return {
        "v": float(v),
        "x_hat": [float(z) for z in np.atleast_1d(x_hat)],
        "v_hat": float(v_hat),
    }


class HonestDDFollower(Strategy):
    """Price-taking best response with truthful value reports.

    Reports the cost at the broadcast feasible point, the minimizer of
    cost(x) + p'R_i x at the broadcast price, and the cost at that minimizer.
    """

    def __init__(self, cost, coupling, block):
        self.cost = cost
        self.coupling = coupling
        self.block = block
        self._report = None

    def update_state(self, broadcast, neighbor_reports):
        p = np.asarray(broadcast.payload["p"], dtype=float)
        x_own = np.asarray(broadcast.payload["x"], dtype=float)[self.block]
        v = evaluate_cost(self.cost, x_own)
        x_hat = argmin_augmented(self.cost, self.coupling.T @ p)
        self._report = _dd_payload(v, x_hat, evaluate_cost(self.cost, x_hat))

    def emit_report(self):
        return self._report


class ConstantDDFollower(Strategy):
    """Keeps proposing the same point; value reports stay truthful."""

    def __init__(self, cost, block, value):
        self.cost = cost
        self.block = block
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self._v_hat = evaluate_cost(cost, self.value)
        self._report = None

    def update_state(self, broadcast, neighbor_reports):
        x_own = np.asarray(broadcast.payload["x"], dtype=float)[self.block]
        v = evaluate_cost(self.cost, x_own)
        self._report = _dd_payload(v, self.value, self._v_hat)

    def emit_report(self):
        return self._report


class StackelbergDDFollower(Strategy):
    """Quantity leader: gradient descent on its augmented cost along the
    estimated market reaction.

    The reaction p(x_i) is estimated numerically each round: freeze the own
    proposal, simulate the honest followers plus the dual update to a fixed
    point, and finite-difference the settled price.  The gradient step reuses
    the mechanism step size.  This needs full knowledge of the problem data,
    which is exactly the informational advantage the deviation models.
    """

    def __init__(self, problem, index, gamma, inner_tol=1e-8,
                 fd_step=1e-6, inner_cap=200_000):
        self.problem = problem
        self.index = index
        self.gamma = float(gamma)
        self.inner_tol = float(inner_tol)
        self.fd_step = float(fd_step)
        self.inner_cap = int(inner_cap)
        self.cost = problem.costs[index]
        self.coupling = problem.coupling_block(index)
        self.block = problem.block(index)
        self.x_hat = argmin_augmented(self.cost, np.zeros(self.cost.dim))
        self._report = None

    def estimate_reaction(self, x_own, p_start=None):
        """Settled price (and responses) of the honest subsystem with the own
        proposal frozen at x_own.  Returns (p, x) where x carries the honest
        best responses at p and the frozen own block."""
        problem = self.problem
        p = (np.zeros(problem.num_constraints) if p_start is None
             else np.array(p_start, dtype=float))
        frozen = self.coupling @ x_own
        others = [j for j in range(problem.num_agents) if j != self.index]
        for _ in range(self.inner_cap):
            residual = frozen - problem.c
            responses = {}
            for j in others:
                Rj = problem.coupling_block(j)
                xj = argmin_augmented(problem.costs[j], Rj.T @ p)
                responses[j] = xj
                residual = residual + Rj @ xj
            p_next = p + self.gamma * residual
            if np.linalg.norm(p_next - p) <= self.inner_tol:
                x = np.empty(problem.dim)
                x[self.block] = x_own
                for j, xj in responses.items():
                    x[problem.block(j)] = xj
                return p_next, x
            p = p_next
        raise StrategyError(
            f"reaction estimate for agent {self.index} did not settle "
            f"within {self.inner_cap} inner iterations"
        )

    def _reaction_gradient(self, x_own, p_start):
        p0, _ = self.estimate_reaction(x_own, p_start)
        grad = self.cost.A @ x_own + self.cost.b + self.coupling.T @ p0
        own_flow = self.coupling @ x_own
        for j in range(x_own.shape[0]):
            h = self.fd_step * (1.0 + abs(float(x_own[j])))
            bumped = x_own.copy()
            bumped[j] += h
            ph, _ = self.estimate_reaction(bumped, p_start)
            grad[j] += float((ph - p0) @ own_flow) / h
        return grad

    def update_state(self, broadcast, neighbor_reports):
        p = np.asarray(broadcast.payload["p"], dtype=float)
        x_own = np.asarray(broadcast.payload["x"], dtype=float)[self.block]
        v = evaluate_cost(self.cost, x_own)
        grad = self._reaction_gradient(self.x_hat, p)
        self.x_hat = self.x_hat - self.gamma * grad
        self._report = _dd_payload(v, self.x_hat, evaluate_cost(self.cost, self.x_hat))

    def emit_report(self):
        return self._report


# ---------------------------------------------------------------------------
# Consensus follower programs (report schema: x, v, plus owned edge duals)


def _consensus_payload(x, v, duals=None):
    payload = {"x": float(x), "v": float(v)}
    if duals is not None:
        payload["duals"] = {str(e): float(val) for e, val in sorted(duals.items())}
    return payload


class EdgeDualFollower(Strategy):
    """Honest edge-dual consensus agent.

    Holds one dual per incident edge; owns (and integrates) the duals of
    edges it is the lower endpoint of, and mirrors the owner's shared value
    for the rest.  Each round it applies the explicit best response
    x = theta - 0.5 * sum(sign * dual) and reports x with its cost.
    """

    def __init__(self, theta, incident, gamma=None):
        # incident: iterable of (edge_index, sign, other_vertex, owned)
        self.theta = float(theta)
        self.incident = tuple(incident)
        self.gamma = gamma
        self.owned = {e: 0.0 for e, _, _, owned in self.incident if owned}
        self.views = {e: 0.0 for e, _, _, _ in self.incident}
        self.x = None
        self._report = None

    def update_state(self, broadcast, neighbor_reports):
        if self.gamma is None and "gamma" in broadcast.payload:
            self.gamma = float(broadcast.payload["gamma"])
        neighbor_x = {}
        for j, report in neighbor_reports.items():
            neighbor_x[j] = float(report.payload["x"])
            for key, val in report.payload.get("duals", {}).items():
                e = int(key)
                if e in self.views and e not in self.owned:
                    self.views[e] = float(val)
        if self.x is not None:
            for e, sign, other, owned in self.incident:
                if owned and other in neighbor_x:
                    # sign is +1 on owned edges: the residual is x_own - x_other.
                    self.owned[e] += self.gamma * (self.x - neighbor_x[other])
                    self.views[e] = self.owned[e]
        pull = sum(sign * self.views[e] for e, sign, _, _ in self.incident)
        self.x = self.theta - 0.5 * pull
        v = (self.x - self.theta) ** 2
        self._report = _consensus_payload(self.x, v, self.owned)

    def emit_report(self):
        return self._report


class AveragingFollower(Strategy):
    """Honest linear-averaging agent: repeated neighbor averaging from its type."""

    def __init__(self, theta, alpha=None):
        self.theta = float(theta)
        self.alpha = alpha
        self.z = None
        self._report = None

    def update_state(self, broadcast, neighbor_reports):
        if self.alpha is None and "alpha" in broadcast.payload:
            self.alpha = float(broadcast.payload["alpha"])
        if self.z is None:
            self.z = self.theta
        else:
            shift = sum(
                float(r.payload["x"]) - self.z for r in neighbor_reports.values()
            )
            self.z = self.z + self.alpha * shift
        v = (self.z - self.theta) ** 2
        self._report = _consensus_payload(self.z, v)

    def emit_report(self):
        return self._report


class ConstantConsensusFollower(Strategy):
    """Lazy deviation: a fixed consensus report, no dual bookkeeping."""

    def __init__(self, theta, value, share_duals=False, owned_edges=()):
        self.theta = float(theta)
        self.value = float(value)
        self.share_duals = share_duals
        self.owned = {e: 0.0 for e in owned_edges}
        v = (self.value - self.theta) ** 2
        duals = self.owned if share_duals else None
        self._report = _consensus_payload(self.value, v, duals)

    def update_state(self, broadcast, neighbor_reports):
        pass

    def emit_report(self):
        return self._report
