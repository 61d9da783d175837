"""Per-tile lifecycle state machine, validation memory, and group wiring.

A tile is the unit of replication: it hosts one replica of every thread in
its tile groups, owns a validation memory segment its siblings may only
read, and moves through a fixed status machine driven by checkpoints and
supervisor commands.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .workload import StateSnapshot, ThreadSpec, ThreadState

# Tile statuses
BOOTING = "booting"
ACTIVE = "active"
IDLE_SPARE = "idle-spare"
UPDATING = "updating"
SUSPECT = "suspect"
REBOOTING = "rebooting"
DEFUNCT = "defunct"

# Allowed status transitions. Defunct is reachable from anywhere but only
# the supervisor takes that decision; rebooting out of Updating/Suspect
# covers watchdog resets and failed updates.
TRANSITIONS = {
    BOOTING: {ACTIVE, IDLE_SPARE, DEFUNCT},
    ACTIVE: {SUSPECT, REBOOTING, DEFUNCT},
    SUSPECT: {ACTIVE, UPDATING, REBOOTING, DEFUNCT},
    REBOOTING: {BOOTING},
    IDLE_SPARE: {UPDATING, REBOOTING, DEFUNCT},
    UPDATING: {ACTIVE, SUSPECT, REBOOTING, DEFUNCT},
    DEFUNCT: {REBOOTING},  # Stage 2 repair reboots a defunct tile
}


class InvalidTransition(RuntimeError):
    pass


class NotOwner(AssertionError):
    """A tile tried to write another tile's validation memory."""


@dataclass
class ValidationEntry:
    checksum: int
    snapshot: Optional[StateSnapshot] = None


class ValidationMemory:
    """Tile-owned segment: writable by the owner, readable by every sibling."""

    def __init__(self, owner: str):
        self.owner = owner
        self.entries: dict[tuple[str, int], ValidationEntry] = {}
        self.ready: set[tuple[str, int]] = set()

    def write_checksum(self, actor: str, thread_id: str, checkpoint_index: int, checksum: int):
        if actor != self.owner:
            raise NotOwner(f"{actor} wrote validation memory of {self.owner}")
        self.entries[(thread_id, checkpoint_index)] = ValidationEntry(checksum=checksum)

    def write_snapshot(self, actor: str, checkpoint_index: int, snapshot: StateSnapshot):
        if actor != self.owner:
            raise NotOwner(f"{actor} wrote validation memory of {self.owner}")
        key = (snapshot.thread_id, checkpoint_index)
        entry = self.entries.get(key)
        if entry is None:
            entry = ValidationEntry(checksum=0)
            self.entries[key] = entry
        entry.snapshot = snapshot

    def mark_ready(self, actor: str, group_id: str, checkpoint_index: int):
        if actor != self.owner:
            raise NotOwner(f"{actor} set ready flag of {self.owner}")
        self.ready.add((group_id, checkpoint_index))

    def is_ready(self, group_id: str, checkpoint_index: int) -> bool:
        return (group_id, checkpoint_index) in self.ready

    def checksum_of(self, thread_id: str, checkpoint_index: int) -> Optional[int]:
        entry = self.entries.get((thread_id, checkpoint_index))
        return entry.checksum if entry else None

    def snapshot_of(self, thread_id: str, checkpoint_index: int) -> Optional[StateSnapshot]:
        entry = self.entries.get((thread_id, checkpoint_index))
        return entry.snapshot if entry else None

    def clear(self):
        self.entries.clear()
        self.ready.clear()


@dataclass
class ThreadGroup:
    tg_id: str
    threads: list[ThreadSpec]
    criticality: int = 0
    # thread_id -> check every n-th checkpoint; filled in when bound to a group
    check_divisor: dict[str, int] = field(default_factory=dict)
    deactivated: bool = False

    def __post_init__(self):
        if not self.threads:
            raise ValueError(f"thread group {self.tg_id} is empty")
        if not self.criticality:
            self.criticality = max(t.criticality for t in self.threads)


@dataclass
class TileGroup:
    group_id: str
    members: list[str]
    thread_groups: list[str]
    base_period: int
    comparison_deadline: int
    grace_period: int
    target_size: int = 0
    checkpoint_index: int = -1   # first checkpoint (at boot) is index 0
    correction_enabled: bool = True
    period_factor: int = 1       # grows when the frequency degradation lever fires

    def __post_init__(self):
        if self.base_period <= 0:
            raise ValueError(f"group {self.group_id}: base_period must be > 0")
        if not self.target_size:
            self.target_size = len(self.members)

    @property
    def period(self) -> int:
        return self.base_period * self.period_factor


@dataclass
class RunWindow:
    """Execution window of one thread group's replicas on one tile.

    Work cycles happen at absolute boundary crossings relative to the
    group-synchronized epoch, so interrupting an advance mid-window (to
    inject a fault) splits it without losing or double-counting cycles.
    """
    epoch: int = 0
    advanced_to: int = 0
    running: bool = False

    def resume(self, now: int):
        self.epoch = now
        self.advanced_to = now
        self.running = True

    def cycles(self, now: int, work_per_tick: int) -> int:
        if not self.running or now <= self.advanced_to:
            return 0
        return (now - self.epoch) // work_per_tick - (self.advanced_to - self.epoch) // work_per_tick


class Tile:
    def __init__(self, tile_id: str, partition: str, capacity: float = 0.0):
        self.tile_id = tile_id
        self.partition = partition
        self.capacity = capacity
        # tile-specific salt for modeling damaged-logic corruption
        self.noise_seed = int.from_bytes(
            hashlib.blake2b(tile_id.encode(), digest_size=8).digest(), "little")
        self.status = BOOTING
        self.groups: list[str] = []          # tile-group ids, in join order
        self.hosted_groups: set[str] = set() # thread-group ids
        self.vmem = ValidationMemory(tile_id)
        self.sefi_blocked = False
        self.sefi_epoch = 0                  # bumps when a block is set or cleared
        self.persist_corrupt = False         # active fabric damage under this tile's footprint
        self.threads: dict[str, ThreadState] = {}
        self.windows: dict[str, RunWindow] = {}  # thread-group id -> window

    def set_status(self, new: str):
        if new == self.status:
            return
        allowed = TRANSITIONS.get(self.status, set())
        if new not in allowed:
            raise InvalidTransition(f"{self.tile_id}: {self.status} -> {new}")
        self.status = new
        if new in (DEFUNCT, IDLE_SPARE, REBOOTING):
            self.groups.clear()
            self.hosted_groups.clear()
            self.windows.clear()

    @property
    def is_member(self) -> bool:
        """Lockstepping siblings expect a report from this tile."""
        return self.status in (ACTIVE, SUSPECT, UPDATING)


# scheduler_step actions
RUN_THREADS = "run-threads"
PERFORM_UPDATE = "perform-update"
SLEEP = "sleep-until-checkpoint"


def scheduler_step(tile: Tile, pending_update_donor: Optional[str] = None) -> str:
    """The three conditions a tile checks when control returns to its scheduler."""
    if pending_update_donor is not None or tile.status == UPDATING:
        return PERFORM_UPDATE
    if tile.status == ACTIVE and tile.hosted_groups:
        return RUN_THREADS
    return SLEEP
