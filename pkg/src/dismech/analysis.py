"""Net-cost accounting and empirical asymptotic-incentive-compatibility checks.

The sweep runs a scenario twice per accuracy level (everyone honest, then one
agent deviating), always values the deviant's decision at its TRUE type, and
tabulates the deviation gain against the 1/n bound plus the distance of the
honest outcome from the exact social choice.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import evaluate_cost
from .errors import NonConvergenceError
from .scenario import oracle_target, run_scenario
from .strategies import Honest

__all__ = [
    "EPS_NUM",
    "net_cost",
    "social_choice_distance",
    "deviation_gain",
    "asymptotic_ic_sweep",
    "ICRow",
    "ICReport",
]

# Numerical slack added to every inequality check.
EPS_NUM = 1e-9


def net_cost(choice, cost, agent_index, block=None):
    """Agent's realized net cost: own cost at the decision plus its tax.

    `cost` must be the agent's TRUE cost; this is what makes misreport
    accounting honest even though the mechanism saw the fake type.  `block`
    selects the agent's slice of the decision vector and defaults to the
    scalar-per-agent layout used by consensus.
    """
    if block is None:
        block = slice(agent_index, agent_index + 1)
    return evaluate_cost(cost, choice.x[block]) + float(choice.t[agent_index])


def social_choice_distance(choice, target):
    """Max-norm distance over the concatenated decision and tax vectors."""
    return max(
        float(np.max(np.abs(choice.x - target.x))),
        float(np.max(np.abs(choice.t - target.t))),
    )


def _arm(sc, stances, n, parallel):
    choice, _ = run_scenario(sc, stances=stances, n=n, parallel=parallel)
    return choice


def _profiles(sc, agent_index, deviant):
    honest = [Honest() for _ in range(sc.num_agents)]
    deviating = list(honest)
    deviating[agent_index] = deviant
    return honest, deviating


def deviation_gain(sc, agent_index, deviant, n, parallel=False):
    """u_i(honest run) - u_i(deviant run); positive means the deviation pays.

    Raises NonConvergenceError if either arm hits the round cap (no outcome
    to assign).
    """
    honest, deviating = _profiles(sc, agent_index, deviant)
    cost = sc.true_cost(agent_index)
    block = sc.decision_block(agent_index)
    u_honest = net_cost(_arm(sc, honest, n, parallel), cost, agent_index, block)
    u_deviant = net_cost(_arm(sc, deviating, n, parallel), cost, agent_index, block)
    return u_honest - u_deviant


@dataclass(frozen=True)
class ICRow:
    n: int
    u_honest: float
    u_deviant: float
    gain: float
    bound: float
    dist: float
    status: str


@dataclass
class ICReport:
    """Per-n deviation-gain table for one scenario/deviant pair."""

    scenario: str
    agent: int
    deviant: str
    rows: list
    passed: bool
    delta1: float

    def to_obj(self):
        return {
            "scenario": self.scenario,
            "agent": self.agent,
            "deviant": self.deviant,
            "passed": self.passed,
            "delta1": self.delta1,
            "rows": [vars(r) for r in self.rows],
        }

    def to_json(self):
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["n", "u_honest", "u_deviant", "gain", "bound", "dist", "status"])
        for r in self.rows:
            writer.writerow(
                [r.n, repr(r.u_honest), repr(r.u_deviant), repr(r.gain),
                 repr(r.bound), repr(r.dist), r.status]
            )
        return buf.getvalue()

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def asymptotic_ic_sweep(sc, agent_index, deviant, n_list, delta1=1e-3, parallel=False):
    """Tabulate deviation gains and honest convergence over increasing n.

    PASS means: every honest arm terminated with gain <= 1/n + EPS_NUM
    wherever the deviant arm also terminated, and the honest outcome's
    distance from the exact social choice is below delta1 at the largest n
    and no worse than at the smallest.  Non-terminating deviant arms are
    flagged in the status column; they carry no gain.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    target = oracle_target(sc)
    cost = sc.true_cost(agent_index)
    block = sc.decision_block(agent_index)
    honest, deviating = _profiles(sc, agent_index, deviant)

    rows = []
    gains_ok = True
    honest_ok = True
    dists = []
    for n in n_list:
        status = "ok"
        u_honest = u_deviant = gain = dist = math.nan
        try:
            choice_h = _arm(sc, honest, n, parallel)
            u_honest = net_cost(choice_h, cost, agent_index, block)
            dist = social_choice_distance(choice_h, target)
            dists.append(dist)
        except NonConvergenceError:
            status = "honest_nonconvergent"
            honest_ok = False
        if status == "ok":
            try:
                choice_d = _arm(sc, deviating, n, parallel)
                u_deviant = net_cost(choice_d, cost, agent_index, block)
                gain = u_honest - u_deviant
                if gain > 1.0 / n + EPS_NUM:
                    gains_ok = False
            except NonConvergenceError:
                status = "deviant_nonconvergent"
        rows.append(ICRow(n=n, u_honest=u_honest, u_deviant=u_deviant, gain=gain,
                          bound=1.0 / n, dist=dist, status=status))

    converged = bool(dists) and dists[-1] < delta1 and dists[-1] <= dists[0] + EPS_NUM
    return ICReport(
        scenario=sc.name,
        agent=agent_index,
        deviant=type(deviant).__name__,
        rows=rows,
        passed=honest_ok and gains_ok and converged,
        delta1=delta1,
    )
