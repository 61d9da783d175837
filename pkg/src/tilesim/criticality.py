"""Mixed-criticality reallocation: when spares and fabric repair are
exhausted, redistribute thread groups over the surviving tiles, degrading
low-criticality work first.

Placement is greedy in descending criticality (ties by label) with a
preference for tiles that already host the group, then best-fit by
remaining capacity. Capacity is linear-additive: a thread's utilization is
its work rate plus its checkpoint cost amortized over the period.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .workload import ThreadSpec

REDUCE_REPLICAS = "reduce-replicas"
REDUCE_FREQUENCY = "reduce-checkpoint-frequency"
DEACTIVATE = "deactivate"

MODE_FULL = "full"
MODE_DETECT_ONLY = "detect-only"
MODE_DEACTIVATED = "deactivated"


@dataclass(frozen=True)
class CriticalityPolicy:
    min_replicas_high: int = 3
    min_replicas_low: int = 2
    high_threshold: int = 5
    degradation_order: tuple[str, ...] = (REDUCE_REPLICAS, REDUCE_FREQUENCY, DEACTIVATE)
    frequency_factor: int = 2
    max_period_factor: int = 8

    def __post_init__(self):
        if not (self.min_replicas_high >= self.min_replicas_low >= 1):
            raise ValueError("need min_replicas_high >= min_replicas_low >= 1")
        for lever in self.degradation_order:
            if lever not in (REDUCE_REPLICAS, REDUCE_FREQUENCY, DEACTIVATE):
                raise ValueError(f"unknown degradation lever {lever!r}")

    def class_min(self, criticality: int) -> int:
        if criticality >= self.high_threshold:
            return self.min_replicas_high
        return self.min_replicas_low


@dataclass(frozen=True)
class AllocRequest:
    tg_id: str
    criticality: int
    threads: tuple[ThreadSpec, ...]
    period: int                      # desired base period of the hosting group
    current_tiles: tuple[str, ...]   # healthy members currently hosting it
    period_factor: int = 1


@dataclass
class PlanEntry:
    tg_id: str
    tiles: tuple[str, ...]
    period_factor: int
    mode: str
    levers: tuple[str, ...] = ()
    loss_of_capability: bool = False

    @property
    def active(self) -> bool:
        return self.mode != MODE_DEACTIVATED


@dataclass
class Plan:
    entries: list[PlanEntry] = field(default_factory=list)

    def entry(self, tg_id: str) -> PlanEntry:
        for e in self.entries:
            if e.tg_id == tg_id:
                return e
        raise KeyError(tg_id)


def utilization(spec: ThreadSpec, period: int, context_switch: int) -> Fraction:
    return Fraction(spec.work_per_tick) + Fraction(
        spec.checksum_cost + context_switch, period
    )


def group_utilization(req: AllocRequest, factor: int, context_switch: int) -> Fraction:
    period = req.period * factor
    return sum(
        (utilization(t, period, context_switch) for t in req.threads),
        start=Fraction(0),
    )


def apply_degradation(
    policy: CriticalityPolicy, lever: str, replicas: int, factor: int
) -> Optional[tuple[int, int]]:
    """One lever application; None when the lever is already at its floor."""
    if lever == REDUCE_REPLICAS:
        if replicas > policy.min_replicas_low:
            return replicas - 1, factor
        return None
    if lever == REDUCE_FREQUENCY:
        if factor * policy.frequency_factor <= policy.max_period_factor:
            return replicas, factor * policy.frequency_factor
        return None
    if lever == DEACTIVATE:
        return 0, factor
    raise ValueError(f"unknown lever {lever!r}")


def reallocate(
    tiles: dict[str, Fraction],
    requests: list[AllocRequest],
    policy: CriticalityPolicy,
    context_switch: int = 2,
) -> Plan:
    """Produce a Stage 3 assignment plan for the surviving tiles.

    Thread groups are placed from most to least critical. Each keeps as
    many replicas as it has healthy hosts (never below its class minimum),
    and placement prefers retained hosts, then tiles that can take the
    group without displacing anything still unplaced. When a group cannot
    be placed, degradation levers fire strictly in the configured order
    until it fits or is deactivated.
    """
    order = sorted(requests, key=lambda r: (-r.criticality, r.tg_id))
    load: dict[str, Fraction] = {t: Fraction(0) for t in tiles}
    tile_order = list(tiles)
    plan = Plan()

    # Capacity currently pinned by groups not yet (re)placed: a soft signal
    # so the greedy disturbs existing placements only when it has to.
    unplaced: dict[str, Fraction] = {t: Fraction(0) for t in tiles}
    for req in requests:
        util = group_utilization(req, req.period_factor, context_switch)
        for t in req.current_tiles:
            if t in unplaced:
                unplaced[t] += util

    for req in order:
        own_util = group_utilization(req, req.period_factor, context_switch)
        for t in req.current_tiles:
            if t in unplaced:
                unplaced[t] -= own_util

        class_min = policy.class_min(req.criticality)
        replicas = max(class_min, len(req.current_tiles)) if req.current_tiles else class_min
        factor = req.period_factor
        levers_used: list[str] = []

        placed: Optional[list[str]] = None
        while True:
            util = group_utilization(req, factor, context_switch)
            candidates = sorted(
                (t for t in tile_order if load[t] + util <= tiles[t]),
                key=lambda t: (
                    t not in req.current_tiles,                      # retain hosts
                    load[t] + unplaced[t] + util > tiles[t],         # avoid displacing
                    tiles[t] - load[t] - unplaced[t],                # best fit
                    tile_order.index(t),
                ),
            )
            if len(candidates) >= replicas:
                placed = candidates[:replicas]
                break
            moved = None
            for lever in policy.degradation_order:
                moved = apply_degradation(policy, lever, replicas, factor)
                if moved is not None:
                    levers_used.append(lever)
                    replicas, factor = moved
                    break
            if moved is None or replicas == 0:
                placed = None
                break

        if not placed:
            high = req.criticality >= policy.high_threshold
            plan.entries.append(PlanEntry(
                tg_id=req.tg_id, tiles=(), period_factor=factor,
                mode=MODE_DEACTIVATED, levers=tuple(levers_used),
                loss_of_capability=high,
            ))
            continue

        placed_sorted = sorted(placed, key=tile_order.index)
        util = group_utilization(req, factor, context_switch)
        for t in placed_sorted:
            load[t] += util
        mode = MODE_FULL if len(placed_sorted) >= 3 else MODE_DETECT_ONLY
        plan.entries.append(PlanEntry(
            tg_id=req.tg_id, tiles=tuple(placed_sorted), period_factor=factor,
            mode=mode, levers=tuple(levers_used),
        ))
    return plan


def priority_dominance_violations(
    tiles: dict[str, Fraction],
    requests: list[AllocRequest],
    plan: Plan,
    policy: CriticalityPolicy,
    context_switch: int = 2,
) -> list[str]:
    """Exchange-argument check: no group may sit below its class minimum
    while strictly less critical groups hold capacity that could fill the
    gap. Returns the ids of groups whose minimum is violated that way.
    """
    by_id = {r.tg_id: r for r in requests}
    load: dict[str, Fraction] = {t: Fraction(0) for t in tiles}
    lower_load: dict[str, dict[str, Fraction]] = {t: {} for t in tiles}
    for entry in plan.entries:
        if not entry.active:
            continue
        req = by_id[entry.tg_id]
        util = group_utilization(req, entry.period_factor, context_switch)
        for t in entry.tiles:
            load[t] += util
            lower_load[t][entry.tg_id] = util

    violations = []
    for entry in plan.entries:
        req = by_id[entry.tg_id]
        class_min = policy.class_min(req.criticality)
        have = len(entry.tiles) if entry.active else 0
        if have >= class_min:
            continue
        util = group_utilization(req, entry.period_factor or 1, context_switch)
        usable = 0
        for t in tiles:
            if t in entry.tiles:
                continue
            freed = sum(
                (u for other, u in lower_load[t].items()
                 if by_id[other].criticality < req.criticality),
                start=Fraction(0),
            )
            if load[t] - freed + util <= tiles[t]:
                usable += 1
        if have + usable >= class_min:
            violations.append(entry.tg_id)
    return violations
