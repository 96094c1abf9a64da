"""Declarative scenario files and the dispatch that runs them.

A scenario bundles a problem instance (coupled allocation or consensus tree),
per-agent strategy assignments, the mechanism to run, and accuracy/step
parameters.  Files are TOML; see the bundled files under
``dismech/scenarios`` for the two shapes.
"""

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import strategies
from .consensus import CommGraph, consensus_social_choice, run_consensus_dd, run_consensus_linear
from .core import AgentType, AllocationProblem, QuadraticCost
from .dd import run_dd_mechanism
from .errors import ConfigurationError
from .oracle import exact_groves_tax, run_direct_mechanism, solve_social_optimum
from .protocol import DEFAULT_ROUND_CAP

__all__ = [
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "bundled_scenario_names",
    "run_scenario",
    "oracle_target",
]

MECHANISMS = ("alg1", "alg2", "alg3", "direct")


@dataclass
class Scenario:
    kind: str
    mechanism: str
    stances: list
    tax_rule: str = "groves"
    problem: AllocationProblem = None
    graph: CommGraph = None
    types: np.ndarray = None
    n: int = 1000
    n_list: list = None
    gamma: float = None
    alpha: float = None
    seed: int = 0
    round_cap: int = DEFAULT_ROUND_CAP
    name: str = "scenario"

    @property
    def num_agents(self):
        if self.kind == "allocation":
            return self.problem.num_agents
        return self.graph.num_vertices

    def true_cost(self, i):
        """Cost at the agent's true type, for net-cost accounting."""
        if self.kind == "allocation":
            return self.problem.costs[i]
        return QuadraticCost.consensus(self.types[i])

    def decision_block(self, i):
        if self.kind == "allocation":
            return self.problem.block(i)
        return slice(i, i + 1)

    def as_allocation_problem(self):
        """The equality-constrained form (consensus trees become Rx = 0)."""
        if self.kind == "allocation":
            return self.problem
        costs = [QuadraticCost.consensus(t) for t in self.types]
        return AllocationProblem(costs, self.graph.constraint_matrix(),
                                 np.zeros(len(self.graph.edges)))


def _fail(name, field_name, message):
    raise ConfigurationError(f"{name}: [{field_name}] {message}")


def _parse_stance(spec, index, mechanism, name):
    where = f"agents[{index}].strategy"
    if not isinstance(spec, dict) or "kind" not in spec:
        _fail(name, where, "must be a table with a 'kind' key")
    kind = spec["kind"]
    if kind == "honest":
        return strategies.honest()
    if kind == "misreport":
        if "fake" not in spec:
            _fail(name, where, "misreport needs a 'fake' type")
        return strategies.misreport(spec["fake"])
    if kind == "stackelberg":
        if mechanism != "alg1":
            _fail(name, where, "stackelberg runs only under mechanism 'alg1'")
        return strategies.stackelberg()
    if kind == "constant":
        if "value" not in spec:
            _fail(name, where, "constant needs a 'value'")
        return strategies.constant(spec["value"])
    _fail(name, where, f"unknown strategy kind {kind!r}")


def _parse_toml(data, name):
    kind = data.get("kind")
    if kind not in ("allocation", "consensus"):
        _fail(name, "kind", "must be 'allocation' or 'consensus'")
    mechanism = data.get("mechanism", "alg1" if kind == "allocation" else "alg3")
    if mechanism not in MECHANISMS:
        _fail(name, "mechanism", f"must be one of {MECHANISMS}")
    if kind == "allocation" and mechanism in ("alg2", "alg3"):
        _fail(name, "mechanism", f"{mechanism} needs a consensus scenario")
    agents = data.get("agents", [])
    if not agents:
        _fail(name, "agents", "at least one agent is required")

    stances = [
        _parse_stance(a.get("strategy", {"kind": "honest"}), i, mechanism, name)
        for i, a in enumerate(agents)
    ]

    problem = graph = types = None
    if kind == "allocation":
        spec = data.get("problem")
        if not spec or "R" not in spec or "c" not in spec:
            _fail(name, "problem", "needs 'R' and 'c'")
        costs = []
        for i, a in enumerate(agents):
            if "curvature" not in a or "target" not in a:
                _fail(name, f"agents[{i}]", "needs 'curvature' and 'target'")
            try:
                costs.append(QuadraticCost.from_target(a["curvature"], a["target"]))
            except ValueError as exc:
                _fail(name, f"agents[{i}]", str(exc))
        try:
            problem = AllocationProblem(costs, spec["R"], spec["c"])
        except ValueError as exc:
            _fail(name, "problem", str(exc))
    else:
        spec = data.get("graph")
        if not spec or "edges" not in spec:
            _fail(name, "graph", "needs an edge list")
        graph = CommGraph(spec.get("vertices", len(agents)), spec["edges"])
        if graph.num_vertices != len(agents):
            _fail(name, "graph", f"{graph.num_vertices} vertices but {len(agents)} agents")
        try:
            types = np.array([float(a["type"]) for a in agents])
        except (KeyError, TypeError, ValueError):
            _fail(name, "agents", "every consensus agent needs a scalar 'type'")

    tax_rule = data.get("tax_rule", "vcg" if mechanism == "direct" else "groves")
    n = int(data.get("n", 1000))
    if n < 1:
        _fail(name, "n", "must be a positive integer")
    n_list = [int(v) for v in data.get("n_sweep", [])] or None

    return Scenario(
        kind=kind,
        mechanism=mechanism,
        stances=stances,
        tax_rule=tax_rule,
        problem=problem,
        graph=graph,
        types=types,
        n=n,
        n_list=n_list,
        gamma=float(data["gamma"]) if "gamma" in data else None,
        alpha=float(data["alpha"]) if "alpha" in data else None,
        seed=int(data.get("seed", 0)),
        round_cap=int(data.get("round_cap", DEFAULT_ROUND_CAP)),
        name=name,
    )


def parse_scenario(path):
    """Parse a scenario file; raises ConfigurationError with the offending field."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return _parse_toml(data, name=path.stem)


def bundled_scenario_names():
    root = resources.files("dismech") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(ref):
    """Load a scenario from a file path or a bundled scenario name."""
    if Path(ref).exists():
        return parse_scenario(ref)
    root = resources.files("dismech") / "scenarios"
    candidate = root / f"{ref}.toml"
    if candidate.is_file():
        data = tomllib.loads(candidate.read_text())
        return _parse_toml(data, name=str(ref))
    raise ConfigurationError(
        f"no scenario file or bundled scenario named {ref!r} "
        f"(bundled: {', '.join(bundled_scenario_names())})"
    )


def run_scenario(sc, stances=None, n=None, tax_rule=None, gamma=None, alpha=None,
                 round_cap=None, mechanism=None, parallel=False):
    """Run a scenario's mechanism, with optional overrides.

    Returns (SocialChoice, Transcript); the transcript is None for the
    one-shot direct mechanism.
    """
    stances = sc.stances if stances is None else stances
    n = sc.n if n is None else int(n)
    tax_rule = sc.tax_rule if tax_rule is None else tax_rule
    gamma = sc.gamma if gamma is None else gamma
    alpha = sc.alpha if alpha is None else alpha
    round_cap = sc.round_cap if round_cap is None else int(round_cap)
    mechanism = sc.mechanism if mechanism is None else mechanism

    if mechanism == "alg1":
        if sc.kind == "consensus":
            problem = sc.as_allocation_problem()
        else:
            problem = sc.problem
        return run_dd_mechanism(problem, stances, n, tax_rule=tax_rule,
                                gamma=gamma, round_cap=round_cap, parallel=parallel)
    if mechanism == "alg2":
        _require_consensus(sc, mechanism)
        return run_consensus_dd(sc.graph, sc.types, stances, n, gamma=gamma,
                                round_cap=round_cap, parallel=parallel)
    if mechanism == "alg3":
        _require_consensus(sc, mechanism)
        return run_consensus_linear(sc.graph, sc.types, stances, n, alpha=alpha,
                                    round_cap=round_cap, parallel=parallel)
    if mechanism == "direct":
        if tax_rule not in ("groves", "vcg"):
            raise ConfigurationError(
                f"direct mechanism charges 'groves' or 'vcg' taxes, not {tax_rule!r}"
            )
        problem = sc.as_allocation_problem()
        reports = []
        for i, stance in enumerate(stances):
            if isinstance(stance, strategies.Honest):
                reports.append(AgentType(problem.costs[i].target))
            elif isinstance(stance, strategies.Misreport):
                reports.append(AgentType(stance.fake_vector()))
            else:
                raise ConfigurationError(
                    f"direct mechanism supports honest/misreport only, got {stance!r}"
                )
        return run_direct_mechanism(problem, reports, tax_rule=tax_rule), None
    raise ConfigurationError(f"unknown mechanism {mechanism!r}")


def _require_consensus(sc, mechanism):
    if sc.kind != "consensus":
        raise ConfigurationError(f"mechanism {mechanism!r} needs a consensus scenario")


def oracle_target(sc):
    """The exact social choice the mechanisms aim for: optimum plus Groves taxes."""
    if sc.kind == "consensus":
        return consensus_social_choice(sc.types)
    x_star, _, _ = solve_social_optimum(sc.problem)
    from .core import SocialChoice

    return SocialChoice(x=x_star, t=exact_groves_tax(sc.problem, x_star))
