"""Exact centralized solver and exact Groves/VCG payments.

This is the ground-truth direct mechanism: it sees reported types, solves the
coupled problem in closed form, and charges exact side payments.  Distributed
mechanisms are validated against it.
"""

import numpy as np
import scipy.linalg

from .core import AgentType, SocialChoice, evaluate_cost
from .errors import InfeasibleSubproblemError

__all__ = [
    "solve_social_optimum",
    "exact_groves_tax",
    "exact_vcg_tax",
    "run_direct_mechanism",
]


def solve_social_optimum(problem):
    """Minimize the total cost subject to Rx = c.

    Solves the stationarity system

        [ blockdiag(A)  R' ] [x]   [-b]
        [ R             0  ] [p] = [ c]

    by dense LU and returns (x_star, p_star, L_star) where p_star is the
    equality multiplier and L_star the optimal total cost.
    """
    H = problem.curvature_blockdiag()
    b = problem.linear_terms()
    R, c = problem.R, problem.c
    n, m = problem.dim, problem.num_constraints
    kkt = np.block([[H, R.T], [R, np.zeros((m, m))]])
    rhs = np.concatenate([-b, c])
    sol = scipy.linalg.lu_solve(scipy.linalg.lu_factor(kkt), rhs)
    x_star = sol[:n]
    p_star = sol[n:]
    return x_star, p_star, problem.total_cost(x_star)


def exact_groves_tax(problem, x_star):
    """Charge each agent the sum of all other agents' costs at x_star."""
    values = np.array(
        [evaluate_cost(cost, xi) for cost, xi in zip(problem.costs, problem.split(x_star))]
    )
    return values.sum() - values


def _reduced_minimum(problem, removed):
    """Minimum total cost of the society without agent `removed`.

    The removed agent's columns leave the coupling matrix, so the remaining
    agents alone must satisfy Rx = c (the removed block sits at zero, the
    minimum-norm completion).  Raises if that leaves no feasible point.
    """
    keep = [j for j in range(problem.num_agents) if j != removed]
    if not keep:
        return 0.0
    cols = np.concatenate([np.arange(problem.dim)[problem.block(j)] for j in keep])
    R = problem.R[:, cols]
    c = problem.c
    # Feasibility of R_{-i} x = c, tolerating a rank-deficient reduced matrix.
    x0, _, _, _ = np.linalg.lstsq(R, c, rcond=None)
    scale = max(1.0, float(np.linalg.norm(c)))
    if np.linalg.norm(R @ x0 - c) > 1e-8 * scale:
        raise InfeasibleSubproblemError(
            f"society without agent {removed} cannot satisfy the coupling constraint",
            agent=removed,
        )
    H = scipy.linalg.block_diag(*[problem.costs[j].A for j in keep])
    b = np.concatenate([problem.costs[j].b for j in keep])
    Z = scipy.linalg.null_space(R)
    if Z.shape[1] == 0:
        x = x0
    else:
        u = np.linalg.solve(Z.T @ H @ Z, -Z.T @ (H @ x0 + b))
        x = x0 + Z @ u
    value = 0.5 * float(x @ H @ x) + float(b @ x)
    return value + sum(problem.costs[j].c0 for j in keep)


def exact_vcg_tax(problem):
    """Marginal-contribution payments: Groves tax minus the no-i social minimum."""
    x_star, _, _ = solve_social_optimum(problem)
    groves = exact_groves_tax(problem, x_star)
    pivot = np.array([_reduced_minimum(problem, i) for i in range(problem.num_agents)])
    return groves - pivot


def run_direct_mechanism(problem, reports, tax_rule="vcg"):
    """One-shot direct mechanism: agents report types, taxes are exact.

    `reports` may differ from the true types; the decision and taxes are
    computed entirely from the reported quadratics.  Net costs at true types
    are the caller's business (see analysis.net_cost).
    """
    if len(reports) != problem.num_agents:
        raise ValueError(
            f"got {len(reports)} reports for {problem.num_agents} agents"
        )
    reported = problem.with_costs(
        [cost.with_target(_theta(r)) for cost, r in zip(problem.costs, reports)]
    )
    x_star, _, _ = solve_social_optimum(reported)
    if tax_rule == "groves":
        t = exact_groves_tax(reported, x_star)
    elif tax_rule == "vcg":
        t = exact_vcg_tax(reported)
    else:
        raise ValueError(f"unknown tax rule {tax_rule!r}")
    return SocialChoice(x=x_star, t=t)


def _theta(report):
    if isinstance(report, AgentType):
        return report.theta
    return np.atleast_1d(np.asarray(report, dtype=float))
