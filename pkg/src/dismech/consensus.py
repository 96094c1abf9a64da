"""Average-consensus mechanisms on trees.

Two follower-side algorithms drive the network to the average of the private
types: an edge-dual decomposition (one integrating price per tree edge) and
plain linear averaging.  The leader only watches the disagreement residual
||Rx||_2, stops once it is within 1/n, and charges everyone the sum of the
other agents' reported costs.  The final decision may be slightly infeasible;
feasibility holds only in the limit.
"""

import numpy as np

from .core import SocialChoice
from .errors import ConfigurationError, MalformedReportError
from .protocol import DEFAULT_ROUND_CAP, Topology, run_rounds
from . import strategies

__all__ = [
    "CommGraph",
    "incidence_matrix",
    "consensus_social_choice",
    "default_edge_dual_step",
    "default_averaging_weight",
    "ConsensusLeader",
    "run_consensus_dd",
    "run_consensus_linear",
]


class CommGraph:
    """Undirected tree over agents, with a deterministic edge orientation.

    Edges are normalized to (low, high) pairs and sorted; each edge points
    from its lower-indexed to its higher-indexed vertex.  The oriented
    incidence matrix B has +1 where an edge leaves a vertex and -1 where it
    enters; the pairwise-equality constraint matrix is R = B'.
    """

    def __init__(self, num_vertices, edges):
        if num_vertices < 1:
            raise ConfigurationError("graph needs at least one vertex")
        normalized = []
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < num_vertices and 0 <= j < num_vertices):
                raise ConfigurationError(f"bad edge ({i}, {j})")
            lo, hi = (i, j) if i < j else (j, i)
            if (lo, hi) in seen:
                raise ConfigurationError(f"duplicate edge ({lo}, {hi})")
            seen.add((lo, hi))
            normalized.append((lo, hi))
        normalized.sort()
        self.num_vertices = num_vertices
        self.edges = tuple(normalized)
        if len(self.edges) != num_vertices - 1 or not self._connected():
            raise ConfigurationError("communication graph must be a tree")

    def _connected(self):
        if self.num_vertices == 1:
            return True
        adj = self.neighbor_sets()
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.num_vertices

    def neighbor_sets(self):
        adj = [set() for _ in range(self.num_vertices)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    @property
    def max_degree(self):
        return max(len(s) for s in self.neighbor_sets()) if self.edges else 0

    def incidence(self):
        B = np.zeros((self.num_vertices, len(self.edges)))
        for e, (lo, hi) in enumerate(self.edges):
            B[lo, e] = 1.0
            B[hi, e] = -1.0
        return B

    def constraint_matrix(self):
        return self.incidence().T

    def laplacian(self):
        R = self.constraint_matrix()
        return R.T @ R

    def incident_edges(self, i):
        """Tuples (edge_index, sign, other_vertex, owned) for vertex i.

        sign is +1 when the edge leaves i (i is the lower endpoint), and the
        lower endpoint owns the edge's dual variable.
        """
        out = []
        for e, (lo, hi) in enumerate(self.edges):
            if i == lo:
                out.append((e, 1.0, hi, True))
            elif i == hi:
                out.append((e, -1.0, lo, False))
        return tuple(out)

    def topology(self):
        return Topology.from_edges(self.num_vertices, self.edges)


def incidence_matrix(graph):
    """Oriented incidence matrix of a tree graph (see CommGraph.incidence)."""
    return graph.incidence()


def consensus_social_choice(types):
    """Exact target outcome: the average everywhere, Groves taxes at it."""
    theta = np.asarray(types, dtype=float)
    mean = float(theta.mean())
    x = np.full(theta.shape[0], mean)
    sq = (x - theta) ** 2
    return SocialChoice(x=x, t=sq.sum() - sq)


def default_edge_dual_step(graph):
    """Conservative edge-dual step: inverse top eigenvalue of the Laplacian."""
    return 1.0 / float(np.linalg.eigvalsh(graph.laplacian())[-1])


def default_averaging_weight(graph):
    """Midpoint of the admissible averaging range (0, 1/max_degree)."""
    return 1.0 / (2.0 * graph.max_degree)


class ConsensusLeader:
    """Residual-watching leader shared by both consensus mechanisms."""

    def __init__(self, graph, n, announce):
        if n < 1:
            raise ConfigurationError(f"accuracy parameter must be >= 1, got {n}")
        self.R = graph.constraint_matrix()
        self.n = int(n)
        self.tol = 1.0 / float(n)
        self.announce = dict(announce)
        self.residual = None
        self.iterations = 0
        self.finished = False
        self.choice = None

    def initial_broadcast(self):
        return dict(self.announce)

    def receive_reports(self, reports):
        num = len(reports)
        x = np.empty(num)
        v = np.empty(num)
        for report in reports:
            xi = float(report.payload["x"])
            vi = float(report.payload["v"])
            if not (np.isfinite(xi) and np.isfinite(vi)):
                raise MalformedReportError(
                    f"agent {report.agent} sent a non-finite report", agent=report.agent
                )
            x[report.agent] = xi
            v[report.agent] = vi
        self.iterations += 1
        self.residual = float(np.linalg.norm(self.R @ x))
        if self.residual <= self.tol:
            self.choice = SocialChoice(x=x, t=v.sum() - v)
            self.finished = True
            return {
                "x_tilde": x.tolist(),
                "t_tilde": self.choice.t.tolist(),
                "residual": self.residual,
            }
        return {"residual": self.residual, "cost": float(v.sum())}


def build_consensus_follower(stance, graph, theta, index, kind, gamma=None, alpha=None):
    """Turn a stance into a follower program ('dd' or 'linear' schema)."""
    from .protocol import Strategy

    if isinstance(stance, Strategy):
        return stance
    if isinstance(stance, strategies.Misreport):
        fake = stance.fake_vector()
        if fake.shape[0] != 1:
            raise ConfigurationError("consensus types are scalar")
        theta = float(fake[0])
        stance = strategies.Honest()
    if isinstance(stance, strategies.Honest):
        if kind == "dd":
            return strategies.EdgeDualFollower(theta, graph.incident_edges(index), gamma)
        return strategies.AveragingFollower(theta, alpha)
    if isinstance(stance, strategies.ConstantReport):
        value = stance.value_vector()
        if value.shape[0] != 1:
            raise ConfigurationError("consensus reports are scalar")
        owned = [e for e, _, _, owned in graph.incident_edges(index) if owned]
        return strategies.ConstantConsensusFollower(
            theta, float(value[0]), share_duals=(kind == "dd"), owned_edges=owned
        )
    raise ConfigurationError(f"unsupported strategy {stance!r} for consensus")


def _run(graph, types, followers, leader, kind, gamma, alpha, round_cap, parallel):
    theta = np.asarray(types, dtype=float)
    if theta.shape[0] != graph.num_vertices:
        raise ConfigurationError(
            f"{theta.shape[0]} types for {graph.num_vertices} vertices"
        )
    if len(followers) != graph.num_vertices:
        raise ConfigurationError(
            f"{len(followers)} strategies for {graph.num_vertices} agents"
        )
    programs = [
        build_consensus_follower(st, graph, theta[i], i, kind, gamma=gamma, alpha=alpha)
        for i, st in enumerate(followers)
    ]
    transcript = run_rounds(
        leader,
        programs,
        topology=graph.topology(),
        round_cap=round_cap,
        parallel=parallel,
    )
    return leader.choice, transcript


def run_consensus_dd(graph, types, followers, n, gamma=None,
                     round_cap=DEFAULT_ROUND_CAP, parallel=False):
    """Edge-dual consensus mechanism; returns (SocialChoice, Transcript).

    Honest agents keep one integrating price per incident edge and play the
    explicit best response x = theta - 0.5 p'R_i; the lower endpoint of each
    edge owns its dual and shares it over the edge one round later.
    """
    if gamma is None:
        gamma = default_edge_dual_step(graph)
    if gamma <= 0:
        raise ConfigurationError("step size must be positive")
    leader = ConsensusLeader(graph, n, announce={"gamma": float(gamma)})
    return _run(graph, types, followers, leader, "dd", gamma, None, round_cap, parallel)


def run_consensus_linear(graph, types, followers, n, alpha=None,
                         round_cap=DEFAULT_ROUND_CAP, parallel=False):
    """Linear-averaging consensus mechanism; returns (SocialChoice, Transcript).

    The leader announces the averaging weight alpha in its opening broadcast;
    alpha must lie in (0, 1/max_degree) for the averaging to contract on a
    tree.
    """
    if alpha is None:
        alpha = default_averaging_weight(graph)
    if not (0.0 < alpha < 1.0 / graph.max_degree):
        raise ConfigurationError(
            f"averaging weight {alpha:g} outside (0, {1.0 / graph.max_degree:g})"
        )
    leader = ConsensusLeader(graph, n, announce={"alpha": float(alpha)})
    return _run(graph, types, followers, leader, "linear", None, alpha, round_cap, parallel)
