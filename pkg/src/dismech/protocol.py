"""Round-based leader/follower computation harness.

Every mechanism in this package runs on the same substrate: at round k each
follower updates its private state from the leader broadcast and the neighbor
reports of round k-1, then emits a report; the leader folds all round-k
reports into its state and emits the round-k broadcast.  The harness records
everything in a Transcript and enforces the information flow: a follower is
only ever handed the previous-round reports of its declared neighbors.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import NonConvergenceError

__all__ = [
    "DEFAULT_ROUND_CAP",
    "LeaderBroadcast",
    "FollowerReport",
    "Round",
    "Transcript",
    "Strategy",
    "Topology",
    "run_rounds",
    "replay_reports",
]

# Converts a silent hang (a stop test that never fires) into a diagnosable
# error carrying the partial transcript.
DEFAULT_ROUND_CAP = 1_000_000


@dataclass(frozen=True)
class LeaderBroadcast:
    round: int
    payload: dict

    def to_obj(self):
        return {"round": self.round, "payload": self.payload}


@dataclass(frozen=True)
class FollowerReport:
    agent: int
    round: int
    payload: dict

    def to_obj(self):
        return {"agent": self.agent, "round": self.round, "payload": self.payload}


@dataclass(frozen=True)
class Round:
    broadcast: LeaderBroadcast
    reports: tuple = ()

    def to_obj(self):
        return {
            "round": self.broadcast.round,
            "broadcast": self.broadcast.payload,
            "reports": [r.to_obj() for r in self.reports],
        }


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Transcript:
    """Full record of a run: one broadcast plus one report per agent per round."""

    def __init__(self, rounds):
        rounds = list(rounds)
        for k, rnd in enumerate(rounds):
            if rnd.broadcast.round != k:
                raise ValueError(f"round {k} carries broadcast labelled {rnd.broadcast.round}")
            agents = [r.agent for r in rnd.reports]
            if len(set(agents)) != len(agents):
                raise ValueError(f"round {k} has duplicate reports")
        self.rounds = rounds

    def __len__(self):
        return len(self.rounds)

    def __eq__(self, other):
        return isinstance(other, Transcript) and self.to_jsonl() == other.to_jsonl()

    @property
    def final_broadcast(self):
        return self.rounds[-1].broadcast

    def reports_of(self, agent):
        return [r for rnd in self.rounds for r in rnd.reports if r.agent == agent]

    def to_jsonl(self):
        """Line-delimited JSON, one round per line, canonical key order."""
        return "".join(_canonical(rnd.to_obj()) + "\n" for rnd in self.rounds)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text):
        rounds = []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            broadcast = LeaderBroadcast(round=obj["round"], payload=obj["broadcast"])
            reports = tuple(
                FollowerReport(agent=r["agent"], round=r["round"], payload=r["payload"])
                for r in obj["reports"]
            )
            rounds.append(Round(broadcast=broadcast, reports=reports))
        return cls(rounds)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


class Strategy:
    """A stateful follower program.

    Subclasses implement update_state (fold in the last broadcast and the
    neighbor reports of the previous round) and emit_report (produce the
    payload sent to the leader and, over declared edges, to neighbors).
    Strategies must be deterministic functions of (type, history) unless
    explicitly seeded.
    """

    def update_state(self, broadcast, neighbor_reports):
        raise NotImplementedError

    def emit_report(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Topology:
    """Follower-to-follower adjacency.  The leader link to every follower is implicit."""

    num_followers: int
    neighbors: tuple = field(default=())

    @classmethod
    def leader_only(cls, num_followers):
        return cls(num_followers, tuple(frozenset() for _ in range(num_followers)))

    @classmethod
    def from_edges(cls, num_followers, edges):
        adj = [set() for _ in range(num_followers)]
        for i, j in edges:
            if not (0 <= i < num_followers and 0 <= j < num_followers) or i == j:
                raise ValueError(f"bad edge ({i}, {j})")
            adj[i].add(j)
            adj[j].add(i)
        return cls(num_followers, tuple(frozenset(s) for s in adj))

    def neighbors_of(self, i):
        return self.neighbors[i]


def _step_followers(followers, topology, broadcast, prev_reports, round_index, parallel):
    def one(item):
        i, strategy = item
        visible = {
            j: prev_reports[j] for j in sorted(topology.neighbors_of(i)) if j in prev_reports
        }
        strategy.update_state(broadcast, visible)
        return FollowerReport(agent=i, round=round_index, payload=strategy.emit_report())

    items = list(enumerate(followers))
    if parallel and len(items) > 1:
        with ThreadPoolExecutor(max_workers=len(items)) as pool:
            return tuple(pool.map(one, items))
    return tuple(one(item) for item in items)


def run_rounds(leader, followers, topology=None, stop=None,
               round_cap=DEFAULT_ROUND_CAP, parallel=False):
    """Drive a leader and follower strategies until the stop test fires.

    Round 0 is the leader's initialization broadcast (no reports).  Each
    later round delivers the previous broadcast and the previous round's
    neighbor reports to every follower, collects their reports, and lets the
    leader update and broadcast.  Returns the Transcript; raises
    NonConvergenceError (carrying the partial transcript) at the round cap.
    """
    if topology is None:
        topology = Topology.leader_only(len(followers))
    if topology.num_followers != len(followers):
        raise ValueError("topology size does not match follower count")
    if stop is None:
        stop = lambda led: led.finished

    broadcast = LeaderBroadcast(round=0, payload=leader.initial_broadcast())
    rounds = [Round(broadcast=broadcast, reports=())]
    if stop(leader):
        return Transcript(rounds)

    prev_reports = {}
    for k in range(1, round_cap + 1):
        reports = _step_followers(followers, topology, broadcast, prev_reports, k, parallel)
        payload = leader.receive_reports(reports)
        broadcast = LeaderBroadcast(round=k, payload=payload)
        rounds.append(Round(broadcast=broadcast, reports=reports))
        if stop(leader):
            return Transcript(rounds)
        prev_reports = {r.agent: r for r in reports}

    raise NonConvergenceError(
        f"no termination within {round_cap} rounds", transcript=Transcript(rounds)
    )


def replay_reports(transcript, followers, topology=None):
    """Re-drive strategies with a recorded transcript's broadcasts.

    Returns the regenerated reports round by round; with the same strategies
    and types these must equal the recorded ones bit for bit.
    """
    if topology is None:
        topology = Topology.leader_only(len(followers))
    regenerated = []
    prev_reports = {}
    for rnd in transcript.rounds[1:]:
        k = rnd.broadcast.round
        prev_broadcast = transcript.rounds[k - 1].broadcast
        reports = _step_followers(
            followers, topology, prev_broadcast, prev_reports, k, parallel=False
        )
        regenerated.append(reports)
        prev_reports = {r.agent: r for r in reports}
    return regenerated
