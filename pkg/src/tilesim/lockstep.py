"""Checkpoint-cycle protocol pieces that are pure functions of captured
values: checksum scheduling, sibling comparison, and output voting.

The event wiring (when each phase runs) lives in the simulation; everything
here is deterministic arithmetic over validation-memory snapshots, which is
what makes the protocol unit-testable in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .workload import OutputRecord

AGREE = "agree"
DISAGREE = "disagree"
MISS = "deadline-miss"


@dataclass
class CheckpointCost:
    context_switch: int = 2

    def checksum_duration(self, specs) -> int:
        """Time a tile spends computing checksums for the given threads."""
        return sum(s.checksum_cost + self.context_switch for s in specs)

    def sync_duration(self, specs) -> int:
        return sum(s.sync_cost + self.context_switch for s in specs)

    def update_duration(self, specs) -> int:
        return sum(s.update_cost + self.context_switch for s in specs)


@dataclass
class CheckpointReport:
    tile_id: str
    checkpoint_index: int
    verdicts: dict[str, str]   # sibling -> agree | disagree | deadline-miss
    completed_at: int
    detected_mismatch: bool = False


def checked_threads(thread_ids: list[str], divisors: dict[str, int], index: int) -> list[str]:
    """Threads scheduled for validation at this checkpoint index."""
    return [t for t in thread_ids if index % divisors.get(t, 1) == 0]


def compare_with_siblings(
    me: str,
    members: list[str],
    written_at: dict[str, int],
    deadline_at: int,
    checked: list[str],
    checkpoint_index: int,
    read_checksum: Callable[[str, str], Optional[int]],
    reads_blocked: bool = False,
) -> CheckpointReport:
    """Compare my validation memory against each sibling's.

    Comparisons happen as siblings become ready, walked in chronological
    order with ties broken by rotated member order (each tile starts at the
    slot after its own, so the group does not hammer one segment and the
    supervisor still sees healthy pairs affirm each other when one member
    is bad). A sibling that never wrote by the deadline scores a miss. On
    the first mismatch or miss the tile stops comparing and reports what it
    has, so later siblings get no verdict at all.
    """
    my_ready = written_at[me]
    my_pos = members.index(me)
    n = len(members)
    order = []
    for pos, sib in enumerate(members):
        if sib == me:
            continue
        if not reads_blocked and sib in written_at:
            when = max(my_ready, written_at[sib])
            ready = when <= deadline_at
            if not ready:
                when = deadline_at
        else:
            ready = False
            when = deadline_at
        order.append((when, (pos - my_pos) % n, sib, ready))
    order.sort(key=lambda item: (item[0], item[1]))

    verdicts: dict[str, str] = {}
    completed = my_ready
    mismatch = False
    for when, _, sib, ready in order:
        if not ready:
            verdicts[sib] = MISS
            completed = when
            mismatch = True
            break
        same = all(
            read_checksum(me, th) is not None
            and read_checksum(me, th) == read_checksum(sib, th)
            for th in checked
        )
        verdicts[sib] = AGREE if same else DISAGREE
        completed = when
        if not same:
            mismatch = True
            break
    return CheckpointReport(
        tile_id=me,
        checkpoint_index=checkpoint_index,
        verdicts=verdicts,
        completed_at=completed,
        detected_mismatch=mismatch,
    )


@dataclass
class VoteResult:
    thread_id: str
    cycle_counter: int
    voted: Optional[OutputRecord]
    divergent: list[str] = field(default_factory=list)  # tiles whose record lost
    no_majority: bool = False


def vote_outputs(
    records: dict[str, OutputRecord],
    voting_enabled: bool,
) -> VoteResult:
    """Majority-vote one checkpoint window's replica outputs for one thread.

    A record wins with >= ceil(n/2) identical copies. Divergent records are
    what would have escaped without voting; with voting disabled they do
    escape and are merely counted.
    """
    tiles = list(records)
    first = records[tiles[0]]
    buckets: dict[int, list[str]] = {}
    for tile in tiles:
        buckets.setdefault(records[tile].digest, []).append(tile)
    n = len(tiles)
    max_size = max(len(v) for v in buckets.values())
    winners = [d for d, v in buckets.items() if len(v) == max_size]
    has_majority = 2 * max_size >= n and len(winners) == 1

    result = VoteResult(thread_id=first.thread_id, cycle_counter=first.cycle_counter, voted=None)
    if has_majority:
        best = winners[0]
        result.voted = records[buckets[best][0]]
        result.divergent = [t for t in tiles if records[t].digest != best]
        if not voting_enabled:
            # divergent records escape; they are merely counted
            pass
    else:
        result.no_majority = True
        result.divergent = list(tiles)
        if not voting_enabled:
            result.voted = first
    return result
