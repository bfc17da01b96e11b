"""Multi-path route search and the path-set to edge-set mapping.

The router is a capacity-scaled successive shortest path search on the
fee-weighted residual graph: it first looks for one route able to carry the
whole remaining amount, halves the per-route target when none exists, and
stops once the amount is covered.  Routes are then merged into an
:class:`EdgeSet` where every shared channel appears once with the summed
flow, and every intermediary charges its fee once per payment.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .pcn import PaymentGraph


class RoutingError(Exception):
    pass


class NoRoute(RoutingError):
    pass


class InconsistentFlows(RoutingError):
    pass


class CyclicFlow(RoutingError):
    pass


Edge = tuple[int, int]


@dataclass(frozen=True)
class PathSet:
    source: int
    sink: int
    val: int
    paths: tuple[tuple[int, ...], ...]
    amounts: tuple[int, ...]  # delivered at the sink by each path

    def __post_init__(self):
        if len(self.paths) != len(self.amounts):
            raise ValueError("one amount per path required")
        for path, amount in zip(self.paths, self.amounts):
            if len(path) < 2 or path[0] != self.source or path[-1] != self.sink:
                raise ValueError(f"path {path} does not join {self.source} to {self.sink}")
            if amount <= 0:
                raise ValueError("path amounts must be positive")
        if sum(self.amounts) != self.val:
            raise ValueError("path amounts must sum to val")

    def total_hops(self) -> int:
        return sum(len(p) - 1 for p in self.paths)


@dataclass
class EdgeSet:
    """Ordered channel set carrying one payment as a flow DAG."""

    source: int
    sink: int
    val: int
    edges: list[Edge]
    flow: dict[Edge, int]
    channel_ids: dict[Edge, int]
    fees: dict[int, int] = field(default_factory=dict)
    timeout: dict[Edge, int] = field(default_factory=dict)

    def __post_init__(self):
        self._succ: dict[int, list[int]] = {}
        self._pred: dict[int, list[int]] = {}
        for u, v in self.edges:
            self._succ.setdefault(u, []).append(v)
            self._pred.setdefault(v, []).append(u)

    def __len__(self) -> int:
        return len(self.edges)

    def successors(self, node: int) -> list[int]:
        return list(self._succ.get(node, ()))

    def predecessors(self, node: int) -> list[int]:
        return list(self._pred.get(node, ()))

    def nodes(self) -> list[int]:
        seen = [self.source]
        for _, v in self.edges:
            if v not in seen:
                seen.append(v)
        return seen

    def intermediaries(self) -> list[int]:
        return [n for n in self.nodes() if n not in (self.source, self.sink)]

    def inflow(self, node: int) -> int:
        return sum(self.flow[(p, node)] for p in self.predecessors(node))

    def outflow(self, node: int) -> int:
        return sum(self.flow[(node, s)] for s in self.successors(node))

    def channel(self, u: int, v: int) -> int:
        return self.channel_ids[(u, v)]

    def conservation_violations(self) -> list[int]:
        bad = [n for n in self.intermediaries()
               if self.inflow(n) != self.outflow(n) + self.fees.get(n, 0)]
        if self.inflow(self.sink) != self.val:
            bad.append(self.sink)
        return bad

    def total_fees(self) -> int:
        return sum(self.fees.get(n, 0) for n in self.intermediaries())


# -- route search --------------------------------------------------------------------


def _search(graph, residual, source, sink, target, charged, banned):
    """Cheapest route (by uncharged fees, then hops) able to deliver ``target``.

    Searches backwards from the sink so the fee still to be added on every
    edge is known when the edge's residual capacity is tested.
    """
    best = {sink: (0, 0)}
    nxt: dict[int, int] = {}
    heap = [(0, 0, sink)]
    while heap:
        fee_acc, hops, v = heapq.heappop(heap)
        if best.get(v) != (fee_acc, hops):
            continue
        if v == source:
            break
        extra = 0 if v in (sink, source) or v in charged else graph.fee(v, target)
        need = target + fee_acc + extra
        for u in graph.neighbors(v):
            if (u, v) in banned or residual[(u, v)] < need:
                continue
            if u == sink:
                continue
            label = (fee_acc + extra, hops + 1)
            if u not in best or label < best[u]:
                best[u] = label
                nxt[u] = v
                heapq.heappush(heap, (label[0], label[1], u))
    if source not in best:
        return None
    path = [source]
    while path[-1] != sink:
        path.append(nxt[path[-1]])
    return tuple(path)


def _route_fees(graph, path, amount, charged):
    """Per-edge amounts for ``path`` delivering ``amount``; uncharged nodes add their fee."""
    amounts = [0] * (len(path) - 1)
    carry = amount
    for i in range(len(path) - 2, -1, -1):
        amounts[i] = carry
        node = path[i]
        if i > 0 and node not in charged:
            carry += graph.fee(node, carry)
    return amounts


def _capacity_of(graph, residual, path, charged, cap):
    """Largest sink amount ``path`` can deliver (bounded by ``cap``)."""
    lo, hi = 0, cap
    while lo < hi:
        mid = (lo + hi + 1) // 2
        per_edge = _route_fees(graph, path, mid, charged)
        if all(residual[(path[i], path[i + 1])] >= a for i, a in enumerate(per_edge)):
            lo = mid
        else:
            hi = mid - 1
    return lo


def _has_cycle(edges: set[Edge]) -> bool:
    succ: dict[int, list[int]] = {}
    for u, v in edges:
        succ.setdefault(u, []).append(v)
    state: dict[int, int] = {}
    for root in list(succ):
        if root in state:
            continue
        stack = [(root, iter(succ.get(root, ())))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                state[node] = 2
                stack.pop()
            elif state.get(child) == 1:
                return True
            elif child not in state:
                state[child] = 1
                stack.append((child, iter(succ.get(child, ()))))
    return False


def find_paths(graph: PaymentGraph, source: int, sink: int, val: int,
               max_paths: int = 16) -> PathSet:
    """Split ``val`` over as few routes as the residual capacities allow."""
    if source == sink:
        raise ValueError("source and sink must differ")
    if val <= 0:
        raise ValueError("val must be positive")
    if source not in graph.nodes or sink not in graph.nodes:
        raise NoRoute("unknown endpoint")
    residual = dict(graph.capacity)
    charged: set[int] = set()
    union: set[Edge] = set()
    banned: set[Edge] = set()
    paths: list[tuple[int, ...]] = []
    amounts: list[int] = []
    remaining = val
    target = val
    while remaining > 0:
        slots = max_paths - len(paths)
        floor = -(-remaining // slots) if slots > 0 else remaining + 1
        if target < floor or slots <= 0:
            raise NoRoute(f"cannot route {val} from {source} to {sink} "
                          f"({val - remaining} routed over {len(paths)} paths)")
        path = _search(graph, residual, source, sink, target, charged, banned)
        if path is None:
            target //= 2
            continue
        new_edges = {(path[i], path[i + 1]) for i in range(len(path) - 1)} - union
        if _has_cycle(union | new_edges):
            banned |= new_edges
            continue
        amount = _capacity_of(graph, residual, path, charged, remaining)
        per_edge = _route_fees(graph, path, amount, charged)
        for i, a in enumerate(per_edge):
            residual[(path[i], path[i + 1])] -= a
            banned.add((path[i + 1], path[i]))
        charged.update(path[1:-1])
        union |= new_edges
        paths.append(path)
        amounts.append(amount)
        remaining -= amount
        target = min(target, remaining) if remaining else target
    return PathSet(source, sink, val, tuple(paths), tuple(amounts))


# -- path set -> edge set -----------------------------------------------------------------


def _edge_order(source: int, succ: dict[int, list[int]], pred: dict[int, list[int]]) -> list[Edge]:
    """Topological traversal of the channel DAG from ``source``.

    Follows each branch depth-first (ascending node id) and emits a channel
    only after every channel entering its tail has been emitted.
    """
    emitted: set[Edge] = set()
    order: list[Edge] = []
    entered: dict[int, int] = {}
    visit = [(source, iter(sorted(succ.get(source, ()))))]
    while visit:
        node, it = visit[-1]
        child = next(it, None)
        if child is None:
            visit.pop()
            continue
        edge = (node, child)
        if edge in emitted:
            continue
        emitted.add(edge)
        order.append(edge)
        entered[child] = entered.get(child, 0) + 1
        if entered[child] == len(pred.get(child, ())):
            visit.append((child, iter(sorted(succ.get(child, ())))))
    return order


def paths_to_edge_set(paths: PathSet, graph: PaymentGraph) -> EdgeSet:
    """Merge routes into a channel DAG with summed flows and once-per-node fees."""
    succ: dict[int, list[int]] = {}
    pred: dict[int, list[int]] = {}
    union: set[Edge] = set()
    for path in paths.paths:
        if len(set(path)) != len(path):
            raise InconsistentFlows(f"path {path} revisits a node")
        for u, v in zip(path, path[1:]):
            if not graph.has_channel(u, v):
                raise InconsistentFlows(f"no channel {u}-{v}")
            if (v, u) in union:
                raise InconsistentFlows(f"channel {u}-{v} used in both directions")
            if (u, v) not in union:
                union.add((u, v))
                succ.setdefault(u, []).append(v)
                pred.setdefault(v, []).append(u)
    if _has_cycle(union):
        raise InconsistentFlows("routes form a cycle")
    order = _edge_order(paths.source, succ, pred)
    if len(order) != len(union):
        raise InconsistentFlows("edge set not reachable from the source")

    # the lowest-index route through a node carries that node's fee
    charger: dict[int, int] = {}
    for idx, path in enumerate(paths.paths):
        for node in path[1:-1]:
            charger.setdefault(node, idx)
    position = [{node: i for i, node in enumerate(path)} for path in paths.paths]
    per_path: list[list[int]] = [[0] * (len(p) - 1) for p in paths.paths]
    for idx, path in enumerate(paths.paths):
        per_path[idx][-1] = paths.amounts[idx]

    flow: dict[Edge, int] = {e: 0 for e in union}
    fees: dict[int, int] = {}
    # a node enters once its last incoming channel is emitted; process latest first
    entry: dict[int, int] = {}
    for i, (_, v) in enumerate(order):
        entry[v] = i
    node_order = sorted((n for n in entry if n != paths.sink), key=entry.__getitem__, reverse=True)
    for node in node_order:
        through = [idx for idx, pos in enumerate(position) if node in pos]
        out_total = 0
        for idx in through:
            i = position[idx][node]
            out_total += per_path[idx][i]
        fee = graph.fee(node, out_total)
        fees[node] = fee
        for idx in through:
            i = position[idx][node]
            per_path[idx][i - 1] = per_path[idx][i] + (fee if charger[node] == idx else 0)
    for idx, path in enumerate(paths.paths):
        for i, (u, v) in enumerate(zip(path, path[1:])):
            flow[(u, v)] += per_path[idx][i]
    channel_ids = {e: graph.channel_id(*e) for e in order}
    return EdgeSet(paths.source, paths.sink, paths.val, order, flow, channel_ids, fees)


def assign_timeouts(pc: EdgeSet, t_end: int, delta_chain: int) -> EdgeSet:
    """Receiver-adjacent contracts expire at ``t_end``; each earlier one a chain step later."""
    timeout: dict[Edge, int] = {}
    state: dict[Edge, int] = {}

    def resolve(edge: Edge) -> int:
        if edge in timeout:
            return timeout[edge]
        if state.get(edge) == 1:
            raise CyclicFlow(f"cycle through channel {edge}")
        state[edge] = 1
        _, v = edge
        if v == pc.sink:
            t = t_end
        else:
            nxt = pc.successors(v)
            if not nxt:
                raise CyclicFlow(f"dead end at node {v}")
            t = max(resolve((v, k)) for k in nxt) + delta_chain
        timeout[edge] = t
        state[edge] = 2
        return t

    for edge in reversed(pc.edges):
        resolve(edge)
    pc.timeout = timeout
    return pc


def route_payment(graph: PaymentGraph, source: int, sink: int, val: int,
                  t_end: int, delta_chain: int, max_paths: int = 16) -> tuple[PathSet, EdgeSet]:
    paths = find_paths(graph, source, sink, val, max_paths=max_paths)
    pc = assign_timeouts(paths_to_edge_set(paths, graph), t_end, delta_chain)
    return paths, pc
