"""Dual-decomposition cost-allocation mechanism with duality-gap termination.

The leader broadcasts a price and a feasible point, followers answer with
their cost at that point plus a priced best-response proposal, and the leader
tightens a bracket [b_lower, b_upper] around the optimal social cost until
the gap falls below 1/n.  Taxes are either Groves style (everyone pays the
others' reported costs) or plain commodity pricing p'R_i x_i.
"""

import numpy as np

from .core import SocialChoice, argmin_augmented, evaluate_cost
from .errors import ConfigurationError, MalformedReportError
from .protocol import DEFAULT_ROUND_CAP, Topology, run_rounds
from . import strategies

__all__ = [
    "dual_update",
    "project_feasible",
    "lower_bound",
    "upper_bound",
    "default_step_size",
    "DDLeader",
    "build_dd_follower",
    "run_dd_mechanism",
]

TAX_RULES = ("groves", "price")


def dual_update(p, x_hat, problem, gamma):
    """One price step along the constraint violation: p + gamma (R x_hat - c)."""
    p = np.asarray(p, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if p.shape[0] != problem.num_constraints or x_hat.shape[0] != problem.dim:
        raise ValueError("dimension mismatch in dual update")
    return p + gamma * (problem.R @ x_hat - problem.c)


def project_feasible(x_hat, problem):
    """Euclidean projection of x_hat onto the affine set Rx = c."""
    x_hat = np.asarray(x_hat, dtype=float)
    e = problem.R @ x_hat - problem.c
    return x_hat - problem.R.T @ problem.gram_solve(e)


def lower_bound(p, problem):
    """Dual value at p: sum of priced per-agent minima minus p'c.

    This is inf_x of the Lagrangian, so it lower-bounds the optimal social
    cost for every p (weak duality).
    """
    p = np.asarray(p, dtype=float)
    total = -float(p @ problem.c)
    for i, cost in enumerate(problem.costs):
        q = problem.coupling_block(i).T @ p
        z = argmin_augmented(cost, q)
        total += evaluate_cost(cost, z) + float(q @ z)
    return total


def upper_bound(x_feas, problem):
    """Total cost at a feasible point; rejects infeasible input."""
    x_feas = np.asarray(x_feas, dtype=float)
    violation = np.linalg.norm(problem.R @ x_feas - problem.c)
    if violation > 1e-8 * max(1.0, float(np.linalg.norm(problem.c))):
        raise ValueError(f"point violates Rx = c by {violation:g}")
    return problem.total_cost(x_feas)


def default_step_size(problem):
    """Safe dual-ascent step: inverse of the dual curvature's top eigenvalue.

    The dual gradient is Lipschitz with constant lambda_max(R H^-1 R') for
    blockdiag curvature H, so stepping by its inverse keeps the ascent stable.
    """
    H = problem.curvature_blockdiag()
    M = problem.R @ np.linalg.solve(H, problem.R.T)
    return 1.0 / float(np.linalg.eigvalsh(M)[-1])


class DDLeader:
    """Leader state machine for the gap-terminated dual decomposition."""

    def __init__(self, problem, n, tax_rule="groves", gamma=None):
        if n < 1:
            raise ConfigurationError(f"accuracy parameter must be >= 1, got {n}")
        if tax_rule not in TAX_RULES:
            raise ConfigurationError(f"unknown tax rule {tax_rule!r}")
        self.problem = problem
        self.n = int(n)
        self.gap_tol = 1.0 / float(n)
        self.tax_rule = tax_rule
        self.gamma = default_step_size(problem) if gamma is None else float(gamma)
        if self.gamma <= 0:
            raise ConfigurationError("step size must be positive")
        self.p = np.zeros(problem.num_constraints)
        # Deterministic, type-independent start: the feasible point nearest 0.
        self.x = project_feasible(np.zeros(problem.dim), problem)
        self.b_lower = None
        self.b_upper = None
        self.iterations = 0
        self.finished = False
        self.choice = None

    def _payload(self, final=False):
        payload = {
            "p": self.p.tolist(),
            "b_lower": self.b_lower,
            "b_upper": self.b_upper,
        }
        if final:
            payload["x_tilde"] = self.choice.x.tolist()
            payload["t_tilde"] = self.choice.t.tolist()
        else:
            payload["x"] = self.x.tolist()
        return payload

    def initial_broadcast(self):
        return self._payload()

    def _parse_reports(self, reports):
        v = np.empty(self.problem.num_agents)
        v_hat = np.empty(self.problem.num_agents)
        x_hat = np.empty(self.problem.dim)
        for i, report in enumerate(reports):
            payload = report.payload
            vi = float(payload["v"])
            vhi = float(payload["v_hat"])
            xhi = np.asarray(payload["x_hat"], dtype=float)
            block = self.problem.block(report.agent)
            if xhi.shape[0] != block.stop - block.start:
                raise MalformedReportError(
                    f"agent {report.agent} proposed a block of dim {xhi.shape[0]}",
                    agent=report.agent,
                )
            if not (np.isfinite(vi) and np.isfinite(vhi) and np.all(np.isfinite(xhi))):
                raise MalformedReportError(
                    f"agent {report.agent} sent a non-finite report", agent=report.agent
                )
            v[report.agent] = vi
            v_hat[report.agent] = vhi
            x_hat[block] = xhi
        return v, x_hat, v_hat

    def receive_reports(self, reports):
        problem = self.problem
        v, x_hat, v_hat = self._parse_reports(reports)
        self.iterations += 1
        # v was evaluated at the feasible point broadcast last round, so the
        # bracket pairs that point's cost with the dual value at the price
        # the proposals answered to.
        self.b_upper = float(v.sum())
        self.b_lower = float(v_hat.sum() + self.p @ (problem.R @ x_hat - problem.c))
        if self.b_upper - self.b_lower <= self.gap_tol:
            # Freeze the decision at the point the final cost reports priced:
            # the taxes below are then consistent with x_tilde and b_upper.
            x_tilde = self.x
            if self.tax_rule == "groves":
                taxes = v.sum() - v
            else:
                taxes = np.array([
                    float(self.p @ problem.coupling_block(i) @ x_tilde[problem.block(i)])
                    for i in range(problem.num_agents)
                ])
            self.choice = SocialChoice(x=x_tilde, t=taxes)
            self.finished = True
            return self._payload(final=True)
        e = problem.R @ x_hat - problem.c
        self.p = self.p + self.gamma * e
        self.x = x_hat - problem.R.T @ problem.gram_solve(e)
        return self._payload()


def build_dd_follower(stance, problem, index, gamma):
    """Turn a stance into a follower program for this mechanism's schema."""
    from .protocol import Strategy

    if isinstance(stance, Strategy):
        return stance
    cost = problem.costs[index]
    if isinstance(stance, strategies.Honest):
        return strategies.HonestDDFollower(
            cost, problem.coupling_block(index), problem.block(index)
        )
    if isinstance(stance, strategies.Misreport):
        fake = stance.fake_vector()
        return strategies.HonestDDFollower(
            cost.with_target(fake), problem.coupling_block(index), problem.block(index)
        )
    if isinstance(stance, strategies.QuantityLeader):
        return strategies.StackelbergDDFollower(
            problem, index, gamma, inner_tol=stance.inner_tol
        )
    if isinstance(stance, strategies.ConstantReport):
        return strategies.ConstantDDFollower(
            cost, problem.block(index), stance.value_vector()
        )
    raise ConfigurationError(f"unsupported strategy {stance!r} for dual decomposition")


def run_dd_mechanism(problem, followers, n, tax_rule="groves", gamma=None,
                     round_cap=DEFAULT_ROUND_CAP, parallel=False):
    """Run the gap-terminated mechanism; returns (SocialChoice, Transcript).

    `followers` is one stance or prebuilt program per agent.  Raises
    NonConvergenceError (with the partial transcript) if the gap never closes
    within the round cap.
    """
    if len(followers) != problem.num_agents:
        raise ConfigurationError(
            f"{len(followers)} strategies for {problem.num_agents} agents"
        )
    leader = DDLeader(problem, n, tax_rule=tax_rule, gamma=gamma)
    programs = [
        build_dd_follower(stance, problem, i, leader.gamma)
        for i, stance in enumerate(followers)
    ]
    transcript = run_rounds(
        leader,
        programs,
        topology=Topology.leader_only(len(programs)),
        round_cap=round_cap,
        parallel=parallel,
    )
    return leader.choice, transcript
