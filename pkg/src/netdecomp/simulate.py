"""Round-synchronous CONGEST engine with per-edge bit budgets, plus the
cluster-communication primitives (bounded flooding, min-gossip, broadcast,
convergecast) the decomposition phases are built from.

Execution model: all nodes step in lockstep; a message sent in round r is
in the recipient's inbox in round r+1.  Every message declares its own bit
size (tag bits plus field widths) so the congestion ledger is auditable
rather than inferred.  A node's local view exposes only its id, its degree
and its ports — neighbor identities must be learned by messages.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

import numpy as np

from .graphs import Graph

TAG_BITS = 8


class SimError(RuntimeError):
    pass


class BudgetError(SimError):
    def __init__(self, round_no: int, edge: tuple[int, int], bits: int, budget: int):
        super().__init__(
            f"round {round_no}: message on edge {edge} uses {bits} bits "
            f"(budget {budget})"
        )
        self.round_no = round_no
        self.edge = edge
        self.bits = bits


@dataclass(frozen=True)
class Message:
    payload: Any
    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise SimError("message must declare a positive bit size")


@dataclass
class SimConfig:
    """Engine knobs.  ``msg_bits`` defaults to 4 * id_bits at run time."""

    msg_bits: Optional[int] = None
    max_rounds: int = 1_000_000
    seed: int = 0
    strict: bool = True
    run_index: int = 0

    def budget_for(self, g: Graph) -> int:
        b = max(4 * g.id_bits, g.id_bits + 8) if self.msg_bits is None else self.msg_bits
        if b < g.id_bits + 8:
            raise SimError(
                f"msg_bits={b} below id_bits + 8 = {g.id_bits + 8}"
            )
        return b

    def widened(self, g: Graph, needed_bits: int) -> "SimConfig":
        """A copy whose default budget accommodates ``needed_bits``; an
        explicitly configured msg_bits is left alone (and stays strict)."""
        from dataclasses import replace

        if self.msg_bits is not None:
            return self
        return replace(self, msg_bits=max(self.budget_for(g), needed_bits))


@dataclass
class RoundStats:
    rounds: int = 0
    max_bits_per_edge_round: int = 0
    total_messages: int = 0
    budget_violations: list[tuple[int, tuple[int, int], int]] = field(
        default_factory=list
    )

    def merge(self, other: "RoundStats") -> None:
        self.rounds += other.rounds
        self.max_bits_per_edge_round = max(
            self.max_bits_per_edge_round, other.max_bits_per_edge_round
        )
        self.total_messages += other.total_messages
        self.budget_violations.extend(other.budget_violations)

    def to_json(self) -> dict:
        return {
            "rounds": self.rounds,
            "max_bits_per_edge_round": self.max_bits_per_edge_round,
            "total_messages": self.total_messages,
            "budget_violations": [
                [r, list(e), b] for r, e, b in self.budget_violations
            ],
        }


@dataclass
class NodeView:
    """What a node is allowed to see: itself and its ports, nothing else."""

    node_id: int
    degree: int
    id_bits: int
    rng: np.random.Generator


class NodeProgram:
    """Per-node state machine.  Subclasses set ``halted`` when done."""

    halted: bool = False

    def init(self, view: NodeView) -> None:
        self.view = view

    def step(self, round_no: int, inbox: dict[int, Message]) -> dict[int, Message]:
        raise NotImplementedError

    def output(self) -> Any:
        return None


def node_rng(seed: int, node_id: int, run_index: int = 0) -> np.random.Generator:
    """Private replayable stream per (seed, node, run).

    The 128-bit Philox key is a hash of the triple so arbitrarily large
    node identifiers map to independent streams deterministically.
    """
    import hashlib

    digest = hashlib.blake2b(
        f"{seed}:{node_id}:{run_index}".encode(), digest_size=16
    ).digest()
    key = [int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little")]
    return np.random.Generator(np.random.Philox(key=key))


def run(
    g: Graph,
    program_factory: Callable[[], NodeProgram],
    cfg: SimConfig,
    stop_when_quiet: bool = False,
    count_active_only: bool = False,
) -> tuple[list[Any], RoundStats]:
    """Execute ``program_factory()`` instances on every node in lockstep.

    Pure function of (g, programs, cfg): identical inputs give bit-identical
    outputs and stats.  Raises on strict budget breach or round-cap overrun.
    """
    budget = cfg.budget_for(g)
    n = g.n
    progs = [program_factory() for _ in range(n)]
    for i, p in enumerate(progs):
        p.init(
            NodeView(
                node_id=g.ids[i],
                degree=len(g.neighbors[i]),
                id_bits=g.id_bits,
                rng=node_rng(cfg.seed, g.ids[i], cfg.run_index),
            )
        )
    # port p of node i leads to j = neighbors[i][p]; reverse port located by
    # binary search since neighbor lists are sorted
    rev = [
        [bisect.bisect_left(g.neighbors[j], i) for j in g.neighbors[i]]
        for i in range(n)
    ]
    inboxes: list[dict[int, Message]] = [{} for _ in range(n)]
    stats = RoundStats()
    active_rounds = 0
    while not all(p.halted for p in progs):
        if stats.rounds >= cfg.max_rounds:
            raise SimError(f"max_rounds={cfg.max_rounds} exceeded with live nodes")
        stats.rounds += 1
        sent_this_round = 0
        next_inboxes: list[dict[int, Message]] = [{} for _ in range(n)]
        for i in range(n):
            p = progs[i]
            if p.halted:
                continue
            outbox = p.step(stats.rounds, inboxes[i])
            for port, msg in outbox.items():
                j = g.neighbors[i][port]
                stats.total_messages += 1
                sent_this_round += 1
                stats.max_bits_per_edge_round = max(
                    stats.max_bits_per_edge_round, msg.bits
                )
                if msg.bits > budget:
                    edge = (g.ids[min(i, j)], g.ids[max(i, j)])
                    if cfg.strict:
                        raise BudgetError(stats.rounds, edge, msg.bits, budget)
                    stats.budget_violations.append((stats.rounds, edge, msg.bits))
                next_inboxes[j][rev[i][port]] = msg
        inboxes = next_inboxes
        if sent_this_round:
            active_rounds += 1
        elif stop_when_quiet:
            break
    if count_active_only:
        stats.rounds = active_rounds
    return [p.output() for p in progs], stats


# -- min-gossip ----------------------------------------------------------


class _MinGossip(NodeProgram):
    """k rounds of min-flooding: output = exact min value within k hops."""

    def __init__(self, value: Optional[int], hops: int, value_bits: int):
        self.best = value
        self.hops = hops
        self.value_bits = value_bits

    def step(self, round_no, inbox):
        for msg in inbox.values():
            v = msg.payload
            if v is not None and (self.best is None or v < self.best):
                self.best = v
        if round_no > self.hops:
            self.halted = True
            return {}
        if self.best is None:
            return {}
        m = Message(self.best, TAG_BITS + self.value_bits)
        return {p: m for p in range(self.view.degree)}

    def output(self):
        return self.best


def min_gossip(
    g: Graph,
    values: dict[int, int],
    hops: int,
    cfg: SimConfig,
) -> tuple[list[Optional[int]], RoundStats]:
    """Per node: the minimum of ``values`` (keyed by node index) held by any
    node within ``hops``; None if no valued node is that close."""
    value_bits = max(
        (int(v).bit_length() for v in values.values()), default=1
    ) or 1
    it = iter(range(g.n))

    def factory():
        i = next(it)
        return _MinGossip(values.get(i), hops, value_bits)

    return run(g, factory, cfg.widened(g, TAG_BITS + value_bits))


# -- bounded flood -------------------------------------------------------


class _Flood(NodeProgram):
    """Smallest-first, hop-annotated flooding with full memory.

    Each round, each edge carries the smallest-id origin whose best-known
    hop count improved since it was last sent there.  On quiescence every
    node knows the exact shortest hop count (up to ``hops``) of every
    in-range origin; holdings are truncated to the ``fanin`` smallest.
    """

    def __init__(self, origin: Optional[tuple[int, Any]], hops: int, fanin: int, hop_bits: int):
        self.known: dict[int, tuple[int, Any]] = {}  # origin -> (best_hops, payload)
        if origin is not None:
            self.known[origin[0]] = (0, origin[1])
        self.sent: dict[tuple[int, int], int] = {}  # (port, origin) -> hops sent
        self.hops = hops
        self.fanin = fanin
        self.hop_bits = hop_bits
        self.origin_bits: Optional[int] = None  # fall back to view.id_bits

    def step(self, round_no, inbox):
        for msg in inbox.values():
            origin, h, payload = msg.payload
            cur = self.known.get(origin)
            if cur is None or h < cur[0]:
                self.known[origin] = (h, payload)
        out = {}
        for port in range(self.view.degree):
            for origin in sorted(self.known):
                h, payload = self.known[origin]
                if h >= self.hops:
                    continue  # hop budget exhausted
                prev = self.sent.get((port, origin))
                if prev is not None and prev <= h + 1:
                    continue
                self.sent[(port, origin)] = h + 1
                width = self.origin_bits or self.view.id_bits
                out[port] = Message(
                    (origin, h + 1, payload),
                    TAG_BITS + width + self.hop_bits,
                )
                break
        return out

    def output(self):
        best = sorted(self.known)[: self.fanin]
        return {(o, self.known[o][1]) for o in best}


def bounded_flood(
    g: Graph,
    sources: dict[int, tuple[int, Any]],
    hops: int,
    fanin: int,
    cfg: SimConfig,
) -> tuple[list[set[tuple[int, Any]]], RoundStats]:
    """Pipelined flood of (origin id, payload) pairs from ``sources`` (keyed
    by node index; source nodes sharing an origin id, e.g. members of one
    cluster, count once).  Each node ends holding the min(fanin, #in-range)
    smallest origins within ``hops``."""
    if fanin < 1 or hops < 0:
        raise SimError("bounded_flood needs fanin >= 1, hops >= 0")
    if hops == 0:
        stats = RoundStats()
        return (
            [{sources[i]} if i in sources else set() for i in range(g.n)],
            stats,
        )
    hop_bits = max(1, hops.bit_length())
    origin_bits = max(
        g.id_bits, max((int(o).bit_length() for o, _ in sources.values()), default=1)
    )
    it = iter(range(g.n))

    def factory():
        i = next(it)
        prog = _Flood(sources.get(i), hops, fanin, hop_bits)
        prog.origin_bits = origin_bits
        return prog

    return run(
        g,
        factory,
        cfg.widened(g, TAG_BITS + origin_bits + hop_bits),
        stop_when_quiet=True,
        count_active_only=True,
    )


def bounded_flood_oracle(
    g: Graph, sources: dict[int, tuple[int, Any]], hops: int, fanin: int
) -> list[set[tuple[int, Any]]]:
    """Centralized reference: BFS ball of each origin (union over its source
    nodes), then per node the fanin smallest in-range origins.  Uses boolean
    sparse matrix powers."""
    from scipy import sparse

    n = g.n
    adj = g.adjacency_csr().astype(bool)
    payload_of: dict[int, Any] = {}
    members: dict[int, list[int]] = {}
    for i, (origin, payload) in sources.items():
        payload_of[origin] = payload
        members.setdefault(origin, []).append(i)
    origins = sorted(members)
    rows, cols = [], []
    for r, origin in enumerate(origins):
        for i in members[origin]:
            rows.append(r)
            cols.append(i)
    reach = sparse.csr_matrix(
        (np.ones(len(rows), dtype=bool), (rows, cols)),
        shape=(len(origins), n),
    )
    acc = reach.copy()
    for _ in range(hops):
        reach = (reach @ adj).astype(bool)
        acc = (acc + reach).astype(bool)
    out: list[set] = [set() for _ in range(n)]
    csc = acc.tocsc()  # row order == ascending origin id
    for col in range(n):
        rr = csc.indices[csc.indptr[col] : csc.indptr[col + 1]]
        for r in sorted(rr)[:fanin]:
            origin = origins[r]
            out[col].add((origin, payload_of[origin]))
    return out


# -- cluster trees -------------------------------------------------------


@dataclass
class TreeRole:
    """A node's role on one cluster tree: parent port (None at the root)
    and child ports, in the host node's port numbering."""

    cluster_id: int
    parent_port: Optional[int]
    child_ports: tuple[int, ...]
    is_member: bool


def tree_roles(g: Graph, clusters) -> list[list[TreeRole]]:
    """Root every cluster tree at its center and hand each node its roles,
    sorted by cluster id (the multiplexing priority order)."""
    roles: list[list[TreeRole]] = [[] for _ in range(g.n)]
    for c in sorted(clusters, key=lambda c: c.id):
        adj: dict[int, list[int]] = {}
        for a, b in c.tree_edges:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if not adj:
            adj = {c.center: []}
        parent: dict[int, Optional[int]] = {c.center: None}
        order = [c.center]
        for u in order:
            for v in sorted(adj[u]):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
        if len(parent) != len(adj):
            raise SimError(f"cluster {c.id}: tree not connected")
        children: dict[int, list[int]] = {u: [] for u in adj}
        for v, p in parent.items():
            if p is not None:
                children[p].append(v)
        for u in adj:
            pp = (
                None
                if parent[u] is None
                else g.neighbors[u].index(parent[u])
            )
            cp = tuple(sorted(g.neighbors[u].index(v) for v in children[u]))
            roles[u].append(TreeRole(c.id, pp, cp, u in c.members))
    return roles


class _Broadcast(NodeProgram):
    """Root-to-leaves delivery on every tree, one payload per edge per round,
    smallest cluster id first on shared edges."""

    def __init__(self, roles: list[TreeRole], payload: Optional[dict[int, Any]],
                 payload_bits: int):
        self.roles = roles
        self.values: dict[int, Any] = dict(payload or {})
        self.pending: dict[int, set[int]] = {}  # cluster -> child ports left
        self.payload_bits = payload_bits

    def init(self, view):
        super().init(view)
        for r in self.roles:
            self.pending[r.cluster_id] = set(r.child_ports)
        if all(
            r.cluster_id in self.values and not self.pending[r.cluster_id]
            for r in self.roles
        ):
            self.halted = True

    def step(self, round_no, inbox):
        for msg in inbox.values():
            cid, value = msg.payload
            self.values.setdefault(cid, value)
        out = {}
        busy: set[int] = set()
        for r in self.roles:  # ascending cluster id
            if r.cluster_id not in self.values:
                continue
            for port in sorted(self.pending[r.cluster_id]):
                if port in busy:
                    continue
                out[port] = Message(
                    (r.cluster_id, self.values[r.cluster_id]),
                    TAG_BITS + self.payload_bits,
                )
                busy.add(port)
                self.pending[r.cluster_id].discard(port)
        if not out and all(
            r.cluster_id in self.values and not self.pending[r.cluster_id]
            for r in self.roles
        ):
            self.halted = True
        return out

    def output(self):
        return {
            r.cluster_id: self.values[r.cluster_id]
            for r in self.roles
            if r.is_member and r.cluster_id in self.values
        }


def cluster_broadcast(
    g: Graph,
    clusters,
    payloads: dict[int, Any],
    cfg: SimConfig,
    payload_bits: Optional[int] = None,
) -> tuple[list[dict[int, Any]], RoundStats]:
    """Deliver each cluster center's payload to all members over the cluster
    trees, time-multiplexing shared edges by ascending cluster id."""
    roles = tree_roles(g, clusters)
    if payload_bits is None:
        payload_bits = g.id_bits
    centers = {c.center: c.id for c in clusters}
    it = iter(range(g.n))

    def factory():
        i = next(it)
        initial = (
            {centers[i]: payloads[centers[i]]}
            if i in centers and centers[i] in payloads
            else None
        )
        return _Broadcast(roles[i], initial, payload_bits)

    return run(
        g, factory, cfg.widened(g, TAG_BITS + payload_bits), count_active_only=True
    )


class _Convergecast(NodeProgram):
    """Leaves-to-root aggregation.  ``union`` streams the item_cap smallest
    items in ascending order once a subtree is complete; ``count`` sends a
    single tally.  -1 payload marks end-of-stream."""

    def __init__(self, roles, own: dict[int, list[int]], mode: str,
                 item_cap: int, item_bits: int):
        self.roles = roles
        self.own = own
        self.mode = mode
        self.item_cap = item_cap
        self.item_bits = item_bits
        self.got: dict[int, dict[int, list[int]]] = {}
        self.done_children: dict[int, set[int]] = {}
        self.queue: dict[int, list] = {}
        self.result: dict[int, Any] = {}

    def init(self, view):
        super().init(view)
        for r in self.roles:
            self.got[r.cluster_id] = {p: [] for p in r.child_ports}
            self.done_children[r.cluster_id] = set()
            if not r.child_ports and r.parent_port is None:
                value = self._subtree_value(r)
                self.result[r.cluster_id] = (
                    value[0] if self.mode == "count" else value
                )
                self.queue[r.cluster_id] = []
        if not self.roles or all(
            not self.queue.get(r.cluster_id, [True]) for r in self.roles
        ):
            self.halted = True

    def _subtree_value(self, r: TreeRole):
        items = list(self.own.get(r.cluster_id, []))
        for vals in self.got[r.cluster_id].values():
            items.extend(vals)
        if self.mode == "count":
            return [sum(items)] if items else [0]
        return sorted(items)[: self.item_cap]

    def step(self, round_no, inbox):
        for port, msg in inbox.items():
            cid, value = msg.payload
            if value == -1:
                self.done_children[cid].add(port)
            else:
                self.got[cid][port].append(value)
        out = {}
        busy: set[int] = set()
        for r in self.roles:  # ascending cluster id priority
            cid = r.cluster_id
            if self.done_children[cid] != set(r.child_ports):
                continue
            if cid not in self.queue:
                value = self._subtree_value(r)
                if r.parent_port is None:
                    self.result[cid] = (
                        value[0] if self.mode == "count" else value
                    )
                    self.queue[cid] = []
                else:
                    self.queue[cid] = value + [-1]
            if r.parent_port is not None and self.queue[cid]:
                if r.parent_port not in busy:
                    item = self.queue[cid].pop(0)
                    out[r.parent_port] = Message(
                        (cid, item), TAG_BITS + self.item_bits
                    )
                    busy.add(r.parent_port)
        if not out and all(
            not self.queue.get(r.cluster_id, [True]) for r in self.roles
        ):
            self.halted = True
        return out

    def output(self):
        return self.result


def cluster_convergecast(
    g: Graph,
    clusters,
    values: dict[int, dict[int, list[int]]],
    cfg: SimConfig,
    combine: str = "union",
    item_cap: int = 2**30,
) -> tuple[dict[int, Any], RoundStats]:
    """Aggregate per-member values to each cluster center.

    ``values`` maps node index -> {cluster id -> list of items}.  With
    combine='union' the center ends with the item_cap smallest items of its
    members (ascending truncation); with 'count' the total tally.  Returns
    {cluster id -> aggregate} plus stats.
    """
    if combine not in ("union", "count"):
        raise SimError(f"unsupported combine {combine!r}")
    roles = tree_roles(g, clusters)
    item_bits = g.id_bits + 1
    for per in values.values():
        for items in per.values():
            for v in items:
                item_bits = max(item_bits, int(v).bit_length() + 1)
    it = iter(range(g.n))

    def factory():
        i = next(it)
        return _Convergecast(
            roles[i], values.get(i, {}), combine, item_cap, item_bits
        )

    outputs, stats = run(
        g, factory, cfg.widened(g, TAG_BITS + item_bits), count_active_only=True
    )
    merged: dict[int, Any] = {}
    for res in outputs:
        merged.update(res)
    return merged, stats
