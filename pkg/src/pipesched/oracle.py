"""Exhaustive reference optimizer for tiny instances.

Enumerates every subset of initial-edge placements in canonical (edge,
batch, start) order with monotone feasibility pruning, checks each complete
assignment with the independent validator and keeps the exactly-best
objective.  On ties the lexicographically smallest placement set wins, so
results are deterministic.  This is the ground truth the MILP path is tested
against; it must never be fast at the expense of being right, so every prune
only cuts branches whose violations cannot be repaired by further additions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .batches import BatchCatalog, enumerate_batches, batch_id, STANDARD
from .instance import Instance, TankOutage, TransportOutage, validate_instance
from .milpmodel import BuildOptions
from .schedule import Schedule
from .validator import check_schedule, effective_capacity_max, evaluate_objective

ORACLE_STATUS_OPTIMAL = "optimal"
ORACLE_STATUS_INFEASIBLE = "infeasible"
ORACLE_STATUS_BUDGET = "budget_exceeded"


@dataclass(frozen=True)
class OracleLimits:
    max_edges: int = 2
    max_horizon: int = 24
    max_candidates: int = 200
    node_budget: int = 200_000


@dataclass
class OracleResult:
    status: str
    objective: Optional[Fraction]
    schedule: Optional[Schedule]
    components: Optional[dict]
    nodes: int
    leaves: int


class _BudgetExceeded(Exception):
    pass


@dataclass
class _Candidate:
    index: int
    edge: str
    batch: str
    start: int
    volume: int
    length: int
    product: str
    regime: str
    staining: bool
    chain: tuple[str, ...]
    forced: bool = False


def _candidates(inst: Instance, catalog: BatchCatalog) -> list[_Candidate]:
    H = inst.grid.horizon_len
    out: list[_Candidate] = []
    for edge in inst.edges:
        for ref in catalog.refs(edge.id):
            if not ref.is_initial:
                continue
            spec = catalog.spec_by_id[ref.batch]
            for t in range(H - spec.length + 1):
                out.append(
                    _Candidate(
                        index=len(out),
                        edge=edge.id,
                        batch=spec.id,
                        start=t,
                        volume=spec.volume,
                        length=spec.length,
                        product=spec.product,
                        regime=spec.regime,
                        staining=not inst.product(spec.product).is_flushing,
                        chain=catalog.chains[spec.id],
                    )
                )
    return out


def brute_force_optimum(
    inst: Instance,
    limits: OracleLimits = OracleLimits(),
    options: BuildOptions = BuildOptions(),
) -> OracleResult:
    issues = validate_instance(inst)
    if issues:
        raise ValueError("invalid instance: " + "; ".join(str(i) for i in issues))
    if len(inst.edges) > limits.max_edges:
        raise ValueError(f"instance has {len(inst.edges)} edges, oracle limit is {limits.max_edges}")
    H = inst.grid.horizon_len
    if H > limits.max_horizon:
        raise ValueError(f"horizon {H} exceeds oracle limit {limits.max_horizon}")

    catalog = enumerate_batches(inst)
    cands = _candidates(inst, catalog)
    if len(cands) > limits.max_candidates:
        raise ValueError(f"{len(cands)} candidate placements exceed oracle limit {limits.max_candidates}")

    # transport outages remove candidates outright; forced placements must stay
    forbidden: set[tuple[str, str, int]] = set()
    for outage in inst.outages:
        if isinstance(outage, TransportOutage):
            for e, b in outage.batches:
                for t in outage.times:
                    forbidden.add((e, b, t))
    forced_coords: set[tuple[str, str, int]] = set()
    for fx in inst.fixed_transports:
        bid = batch_id(fx.regime, fx.product, STANDARD)
        if bid in catalog.spec_by_id:
            forced_coords.add((catalog.initial_edge(bid), bid, fx.start))
    forced_coords.update(inst.weights.executed)

    kept: list[_Candidate] = []
    for c in cands:
        if any((eid, c.batch, c.start) in forbidden for eid in c.chain):
            if (c.edge, c.batch, c.start) in forced_coords:
                # a forced transport that is also forbidden: nothing can be feasible
                return OracleResult(ORACLE_STATUS_INFEASIBLE, None, None, None, 0, 0)
            continue
        c.forced = (c.edge, c.batch, c.start) in forced_coords
        kept.append(c)
    if any(coord not in {(c.edge, c.batch, c.start) for c in kept} for coord in forced_coords):
        return OracleResult(ORACLE_STATUS_INFEASIBLE, None, None, None, 0, 0)
    cands = kept
    for i, c in enumerate(cands):
        c.index = i
    n = len(cands)

    # pairwise regime-exclusion conflicts: two member starts share an anchor
    # window iff max(0, t1-L1, t2-L2) <= min(t1, t2)
    group_of: dict[str, list[int]] = {}
    for gi, group in enumerate(inst.exclusion_groups):
        for rid in group.members:
            group_of.setdefault(rid, []).append(gi)

    def excl_conflict(a: _Candidate, b: _Candidate) -> bool:
        if not set(group_of.get(a.regime, ())) & set(group_of.get(b.regime, ())):
            return False
        return max(0, a.start - a.length, b.start - b.length) <= min(a.start, b.start)

    # cross-stain conflicts: b enters edge e exactly when a's stain completes there
    def stain_conflict(a: _Candidate, b: _Candidate) -> bool:
        for x, y in ((a, b), (b, a)):
            if x.staining and y.staining and x.product != y.product:
                if x.edge in y.chain and y.start == x.start + x.length:
                    return True
        return False

    # flush obligations: after including a stain, one allowed follow-up start
    # must also be included; satisfiers are candidate indices at the completion
    allowed_followups: dict[int, tuple[frozenset[int], bool]] = {}
    by_coord = {(c.edge, c.batch, c.start): c.index for c in cands}
    for c in cands:
        if not c.staining:
            continue
        te = c.start + c.length
        allowed = (c.batch, *catalog.flush_candidates.get((c.edge, c.batch), ()))
        satisfiers = frozenset(
            by_coord[(c.edge, fb, te)] for fb in allowed if (c.edge, fb, te) in by_coord
        )
        # waived only when no follow-up variable could exist at all
        variable_could_exist = any(te + catalog.spec_by_id[fb].length <= H for fb in allowed)
        waived = options.relax_terminal_flush and not variable_could_exist
        allowed_followups[c.index] = (satisfiers, waived)

    # capacity bookkeeping: some (site, product) pairs can only move one way,
    # which makes their bound violations permanent and prunable
    storage_keys = [(s.id, p.id) for s in inst.storage_sites() for p in inst.products]
    has_in = {key: False for key in storage_keys}
    has_out = {key: False for key in storage_keys}
    for edge in inst.edges:
        for ref in catalog.refs(edge.id):
            spec = catalog.spec_by_id[ref.batch]
            if ref.is_final and (edge.destination, spec.product) in has_in:
                has_in[(edge.destination, spec.product)] = True
            if ref.is_initial and (edge.origin, spec.product) in has_out:
                has_out[(edge.origin, spec.product)] = True

    upper = {}
    lower = {}
    cap_max = {}
    cap_min = {}
    for site in inst.storage_sites():
        for product in inst.products:
            key = (site.id, product.id)
            base = site.profile(product.id).base_profile(H)
            upper[key] = list(base)
            lower[key] = list(base)
            cap_max[key] = [effective_capacity_max(inst, site.id, product.id, t) for t in range(H)]
            cap_min[key] = site.profile(product.id).min_profile(H)

    def stock_events(c: _Candidate) -> list[tuple[tuple[str, str], str, int]]:
        events = []
        last_edge = inst.edge(c.chain[-1])
        first_edge = inst.edge(c.chain[0])
        if (last_edge.destination, c.product) in upper:
            events.append(((last_edge.destination, c.product), "in", c.volume))
        if (first_edge.origin, c.product) in upper:
            events.append(((first_edge.origin, c.product), "out", c.volume))
        return events

    def apply_stock(c: _Candidate, sign: int) -> None:
        arrival = c.start + c.length
        for key, direction, vol in stock_events(c):
            if direction == "in":
                for u in range(c.start, H):
                    upper[key][u] += sign * vol
                for u in range(arrival, H):
                    lower[key][u] += sign * vol
            else:
                for u in range(arrival, H):
                    upper[key][u] -= sign * vol
                for u in range(c.start, H):
                    lower[key][u] -= sign * vol

    def stock_hopeless(c: _Candidate) -> bool:
        for key, _direction, _vol in stock_events(c):
            if not has_out[key] and any(
                cap_max[key][t] is not None and upper[key][t] > cap_max[key][t] for t in range(H)
            ):
                return True
            if not has_in[key] and any(lower[key][t] < cap_min[key][t] for t in range(H)):
                return True
        return False

    # nomination and throughput running totals (monotone caps)
    nomination_caps: dict[tuple[str, str], int] = {}
    for nom in inst.nominations:
        for pid, cap in nom.limits.items():
            nomination_caps[(nom.refinery, pid)] = cap
    nomination_used: dict[tuple[str, str], int] = {k: 0 for k in nomination_caps}

    def nomination_key(c: _Candidate) -> Optional[tuple[str, str]]:
        key = (inst.edge(c.edge).origin, c.product)
        return key if key in nomination_caps else None

    throughput_windows = []
    for lim in inst.throughput_limits:
        window = set(lim.times)
        contribution: dict[int, int] = {}
        for c in cands:
            if c.product != lim.product or c.start not in window:
                continue
            counted_edges = c.chain if options.throughput_per_edge else (c.edge,)
            hits = sum(1 for e in counted_edges if e in lim.edges)
            if hits:
                contribution[c.index] = hits * c.volume
        throughput_windows.append((contribution, lim.limit))
    throughput_used = [0] * len(throughput_windows)

    edge_load: dict[str, list[int]] = {e.id: [0] * H for e in inst.edges}

    chosen: list[int] = []
    chosen_set: set[int] = set()
    best_objective: Optional[Fraction] = None
    best_placements: Optional[tuple] = None
    best_components: Optional[dict] = None
    nodes = 0
    leaves = 0

    def packing_free(c: _Candidate) -> bool:
        for eid in c.chain:
            load = edge_load[eid]
            for u in range(c.start, c.start + c.length):
                if load[u]:
                    return False
        return True

    def include_feasible(c: _Candidate) -> bool:
        if not packing_free(c):
            return False
        for j in chosen:
            other = cands[j]
            if excl_conflict(c, other) or stain_conflict(c, other):
                return False
        key = nomination_key(c)
        if key is not None and nomination_used[key] + c.volume > nomination_caps[key]:
            return False
        for wi, (contribution, cap) in enumerate(throughput_windows):
            extra = contribution.get(c.index, 0)
            if extra and throughput_used[wi] + extra > cap:
                return False
        return True

    def obligations_dead(next_index: int) -> bool:
        # a chosen stain whose every satisfier lies before next_index must be satisfied
        for j in chosen:
            entry = allowed_followups.get(j)
            if entry is None:
                continue
            satisfiers, waived = entry
            if waived:
                continue
            if not satisfiers:
                return True
            if max(satisfiers) < next_index and not (satisfiers & chosen_set):
                return True
        return False

    def push(c: _Candidate) -> None:
        for eid in c.chain:
            load = edge_load[eid]
            for u in range(c.start, c.start + c.length):
                load[u] += 1
        key = nomination_key(c)
        if key is not None:
            nomination_used[key] += c.volume
        for wi, (contribution, _cap) in enumerate(throughput_windows):
            throughput_used[wi] += contribution.get(c.index, 0)
        apply_stock(c, +1)
        chosen.append(c.index)
        chosen_set.add(c.index)

    def pop(c: _Candidate) -> None:
        chosen_set.remove(c.index)
        chosen.pop()
        apply_stock(c, -1)
        for wi, (contribution, _cap) in enumerate(throughput_windows):
            throughput_used[wi] -= contribution.get(c.index, 0)
        key = nomination_key(c)
        if key is not None:
            nomination_used[key] -= c.volume
        for eid in c.chain:
            load = edge_load[eid]
            for u in range(c.start, c.start + c.length):
                load[u] -= 1

    def leaf() -> None:
        nonlocal best_objective, best_placements, best_components, leaves
        leaves += 1
        schedule = Schedule.from_initial(catalog, [(cands[j].edge, cands[j].batch, cands[j].start) for j in chosen])
        if check_schedule(inst, catalog, schedule, options):
            return
        components = evaluate_objective(inst, catalog, schedule)
        objective = components["total"]
        placements = tuple(schedule.sorted_placements)
        if (
            best_objective is None
            or objective > best_objective
            or (objective == best_objective and placements < best_placements)
        ):
            best_objective = objective
            best_placements = placements
            best_components = components

    def dfs(i: int) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > limits.node_budget:
            raise _BudgetExceeded
        if obligations_dead(i):
            return
        if i == n:
            leaf()
            return
        c = cands[i]
        if include_feasible(c):
            push(c)
            if not stock_hopeless(c):
                dfs(i + 1)
            pop(c)
        if not c.forced:
            dfs(i + 1)

    try:
        dfs(0)
    except _BudgetExceeded:
        return OracleResult(ORACLE_STATUS_BUDGET, None, None, None, nodes, leaves)

    if best_objective is None:
        return OracleResult(ORACLE_STATUS_INFEASIBLE, None, None, None, nodes, leaves)
    return OracleResult(
        ORACLE_STATUS_OPTIMAL,
        best_objective,
        Schedule.from_raw(best_placements),
        best_components,
        nodes,
        leaves,
    )
