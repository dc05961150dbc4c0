"""Independent schedule checking and scoring.

This module re-derives every feasibility rule and the objective directly
from the instance and the batch catalog, deliberately not sharing any logic
with the MILP emitters: it simulates stock levels by event accumulation and
checks each rule family on the raw placement set.  Agreement between a
solver solution and this module is therefore meaningful evidence that the
model encodes the intended rules.

Violation families: packing, routes, flushing, exclusion, capacity_upper,
capacity_lower, outage, throughput, nomination, fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .batches import BatchCatalog, batch_cost, batch_id, STANDARD
from .instance import Instance, TankOutage, TransportOutage
from .milpmodel import BuildOptions
from .schedule import Schedule


@dataclass(frozen=True)
class Violation:
    family: str
    coordinate: tuple
    measured: object
    bound: object
    message: str

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "coordinate": list(self.coordinate),
            "measured": str(self.measured),
            "bound": str(self.bound),
            "message": self.message,
        }


@dataclass
class OccupancySeries:
    """Per (site, product) stock trajectories, exact integers per slot."""

    upper: dict[tuple[str, str], list[int]]  # blocked: inbound from start, outbound at completion
    lower: dict[tuple[str, str], list[int]]  # on-stock: inbound at completion, outbound from start

    def to_csv(self) -> str:
        lines = ["site,product,t,lower,upper"]
        for key in sorted(self.upper):
            site, product = key
            lo = self.lower[key]
            up = self.upper[key]
            for t in range(len(up)):
                lines.append(f"{site},{product},{t},{lo[t]},{up[t]}")
        return "\n".join(lines) + "\n"


def _check_placements(inst: Instance, catalog: BatchCatalog, schedule: Schedule) -> None:
    H = inst.grid.horizon_len
    for e, b, t in schedule.placements:
        spec = catalog.spec_by_id.get(b)
        if spec is None:
            raise ValueError(f"placement references unknown batch {b!r}")
        if e not in catalog.chains[b]:
            raise ValueError(f"batch {b!r} does not travel edge {e!r}")
        if t < 0 or t + spec.length > H:
            raise ValueError(f"placement ({e!r}, {b!r}, {t}) does not fit the horizon")


def simulate_occupancy(inst: Instance, catalog: BatchCatalog, schedule: Schedule) -> OccupancySeries:
    """Accumulate stock trajectories for every storage site and product."""
    _check_placements(inst, catalog, schedule)
    H = inst.grid.horizon_len
    upper: dict[tuple[str, str], list[int]] = {}
    lower: dict[tuple[str, str], list[int]] = {}
    for site in inst.storage_sites():
        for product in inst.products:
            base = site.profile(product.id).base_profile(H)
            upper[(site.id, product.id)] = list(base)
            lower[(site.id, product.id)] = list(base)

    for e, b, t in schedule.sorted_placements:
        spec = catalog.spec_by_id[b]
        edge = inst.edge(e)
        chain = catalog.chains[b]
        arrival = t + spec.length
        if e == chain[-1] and (edge.destination, spec.product) in upper:
            key = (edge.destination, spec.product)
            for u in range(t, H):
                upper[key][u] += spec.volume
            for u in range(arrival, H):
                lower[key][u] += spec.volume
        if e == chain[0] and (edge.origin, spec.product) in upper:
            key = (edge.origin, spec.product)
            for u in range(arrival, H):
                upper[key][u] -= spec.volume
            for u in range(t, H):
                lower[key][u] -= spec.volume
    return OccupancySeries(upper=upper, lower=lower)


def effective_capacity_max(inst: Instance, site: str, product: str, t: int) -> Optional[int]:
    """Tank capacity at a slot, after subtracting active tank outages."""
    prof = inst.site(site).profile(product)
    cap = prof.max_profile(inst.grid.horizon_len)[t]
    if cap is None:
        return None
    for outage in inst.outages:
        if isinstance(outage, TankOutage) and outage.site == site and outage.product == product and t in outage.times:
            cap -= outage.reduction
    return cap


def capacity_bound_violations(inst: Instance, occupancy: OccupancySeries) -> list[Violation]:
    out: list[Violation] = []
    H = inst.grid.horizon_len
    for site in inst.storage_sites():
        for product in inst.products:
            key = (site.id, product.id)
            minp = site.profile(product.id).min_profile(H)
            up = occupancy.upper[key]
            lo = occupancy.lower[key]
            for t in range(H):
                cap = effective_capacity_max(inst, site.id, product.id, t)
                if cap is not None and up[t] > cap:
                    out.append(
                        Violation(
                            "capacity_upper",
                            (site.id, product.id, t),
                            up[t],
                            cap,
                            f"blocked stock {up[t]} exceeds capacity {cap} at {site.id}/{product.id} slot {t}",
                        )
                    )
                if lo[t] < minp[t]:
                    out.append(
                        Violation(
                            "capacity_lower",
                            (site.id, product.id, t),
                            lo[t],
                            minp[t],
                            f"on-stock level {lo[t]} below minimum {minp[t]} at {site.id}/{product.id} slot {t}",
                        )
                    )
    return out


def check_schedule(
    inst: Instance,
    catalog: BatchCatalog,
    schedule: Schedule,
    options: BuildOptions = BuildOptions(),
) -> list[Violation]:
    """All rule families on the raw placement set; empty list = feasible."""
    _check_placements(inst, catalog, schedule)
    H = inst.grid.horizon_len
    placements = schedule.placements
    out: list[Violation] = []

    # packing: one batch per edge and slot
    for edge in inst.edges:
        load = [0] * H
        for e, b, t in placements:
            if e != edge.id:
                continue
            for u in range(t, t + catalog.spec_by_id[b].length):
                load[u] += 1
        for t in range(H):
            if load[t] > 1:
                out.append(
                    Violation("packing", (edge.id, t), load[t], 1, f"edge {edge.id} holds {load[t]} batches at slot {t}")
                )

    # routes: all-or-none along each batch's chain
    by_batch_start: dict[tuple[str, int], set[str]] = {}
    for e, b, t in placements:
        by_batch_start.setdefault((b, t), set()).add(e)
    for (b, t), edges_present in sorted(by_batch_start.items()):
        chain = set(catalog.chains[b])
        if edges_present != chain:
            out.append(
                Violation(
                    "routes",
                    (b, t),
                    sorted(edges_present),
                    sorted(chain),
                    f"batch {b} at {t} travels {sorted(edges_present)} instead of its full path",
                )
            )

    # flushing: stain completions must be followed up and exclude other stains
    for e, b, t in sorted(placements):
        spec = catalog.spec_by_id[b]
        if inst.product(spec.product).is_flushing or catalog.chains[b][0] != e:
            continue
        te = t + spec.length
        allowed = (b, *catalog.flush_candidates.get((e, b), ()))
        followed = any((e, c, te) in placements for c in allowed)
        if not followed:
            can_follow = any(te + catalog.spec_by_id[c].length <= H for c in allowed)
            if can_follow or not options.relax_terminal_flush:
                out.append(
                    Violation(
                        "flushing",
                        (e, b, te),
                        "unflushed",
                        "follow-up",
                        f"stain {b} completing at {te} on {e} has no immediate follow-up",
                    )
                )
        for other in catalog.stain_exclusions.get((e, spec.product), ()):
            if (e, other, te) in placements:
                out.append(
                    Violation(
                        "flushing",
                        (e, b, te, other),
                        other,
                        "no other stain",
                        f"stain {other} enters {e} at {te} while {b} sits unflushed",
                    )
                )

    # exclusion groups: no two member starts within each other's windows
    for gi, group in enumerate(inst.exclusion_groups):
        members = set(group.members)
        starts = [
            (t, catalog.spec_by_id[b].length)
            for e, b, t in placements
            if catalog.spec_by_id[b].regime in members and catalog.chains[b][0] == e
        ]
        for anchor in range(H):
            count = sum(1 for t, L in starts if anchor <= t <= anchor + L)
            if count > 1:
                out.append(
                    Violation(
                        "exclusion",
                        (gi, anchor),
                        count,
                        1,
                        f"exclusion group {gi} has {count} member starts in window at {anchor}",
                    )
                )

    out.extend(capacity_bound_violations(inst, simulate_occupancy(inst, catalog, schedule)))

    # transport outages: forbidden starts
    for oi, outage in enumerate(inst.outages):
        if not isinstance(outage, TransportOutage):
            continue
        for e, b in outage.batches:
            for t in outage.times:
                if (e, b, t) in placements:
                    out.append(
                        Violation("outage", (oi, e, b, t), 1, 0, f"placement ({e}, {b}, {t}) hits a transport outage")
                    )

    # throughput: volume started inside the window
    for li, lim in enumerate(inst.throughput_limits):
        window = set(lim.times)
        total = 0
        for e, b, t in placements:
            if e not in lim.edges or t not in window:
                continue
            spec = catalog.spec_by_id[b]
            if spec.product != lim.product:
                continue
            if not options.throughput_per_edge and catalog.chains[b][0] != e:
                continue
            total += spec.volume
        if total > lim.limit:
            out.append(
                Violation("throughput", (li,), total, lim.limit, f"throughput window {li} moves {total} > {lim.limit}")
            )

    # nominations: extracted volume per refinery and product
    for nom in inst.nominations:
        extracted: dict[str, int] = {pid: 0 for pid in nom.limits}
        for e, b, t in placements:
            if inst.edge(e).origin != nom.refinery or catalog.chains[b][0] != e:
                continue
            spec = catalog.spec_by_id[b]
            if spec.product in extracted:
                extracted[spec.product] += spec.volume
        for pid, cap in nom.limits.items():
            if extracted[pid] > cap:
                out.append(
                    Violation(
                        "nomination",
                        (nom.refinery, pid),
                        extracted[pid],
                        cap,
                        f"extraction of {pid} from {nom.refinery} is {extracted[pid]} > {cap}",
                    )
                )

    # fixed transports and already-executed placements must be present
    for fx in inst.fixed_transports:
        bid = batch_id(fx.regime, fx.product, STANDARD)
        e0 = catalog.initial_edge(bid) if bid in catalog.spec_by_id else None
        if e0 is None or (e0, bid, fx.start) not in placements:
            out.append(
                Violation(
                    "fixed",
                    (fx.regime, fx.product, fx.start),
                    "missing",
                    "present",
                    f"fixed transport {bid or fx.regime} at {fx.start} is not scheduled",
                )
            )
    for coord in inst.weights.executed:
        if coord not in placements:
            out.append(
                Violation("fixed", coord, "missing", "present", f"executed placement {coord} is not kept")
            )

    return out


def evaluate_objective(inst: Instance, catalog: BatchCatalog, schedule: Schedule) -> dict:
    """Exact objective components and weighted total for a schedule.

    Components are unweighted: extraction (reward-weighted nominated volume),
    distribution (final-stock shaping), plan_change (minus the number of
    dropped previous placements) and pumping_cost (minus total batch costs).
    """
    w = inst.weights
    placements = schedule.placements

    extraction = Fraction(0)
    for nom in inst.nominations:
        for pid in nom.limits:
            for e, b, t in placements:
                if inst.edge(e).origin != nom.refinery or catalog.chains[b][0] != e:
                    continue
                spec = catalog.spec_by_id[b]
                if spec.product == pid:
                    extraction += w.eta_for(pid) * spec.volume

    distribution = Fraction(0)
    if w.distribution_targets:
        occ = simulate_occupancy(inst, catalog, schedule)
        t_final = inst.grid.t_max
        for tgt in w.distribution_targets:
            final_level = occ.lower[(tgt.site, tgt.product)][t_final]
            if tgt.target is None:
                distribution += tgt.weight * final_level
            else:
                distribution -= tgt.weight * abs(Fraction(final_level) - tgt.target)

    plan_change = Fraction(-sum(1 for coord in w.previous_plan if coord not in placements))

    pumping_cost = Fraction(0)
    for e, b, t in placements:
        if catalog.chains[b][0] != e:
            continue
        pumping_cost -= batch_cost(inst, catalog.spec_by_id[b])

    total = w.alpha * extraction + w.beta * distribution + w.gamma * plan_change + w.theta * pumping_cost
    return {
        "extraction": extraction,
        "distribution": distribution,
        "plan_change": plan_change,
        "pumping_cost": pumping_cost,
        "total": total,
    }
