"""Run orchestrator: binds the event kernel, tiles, lockstep protocol,
supervisor, fabric, criticality manager, and fault injector into one
deterministic simulation instance.

One Simulation owns all mutable state for a run and is never shared across
threads; independent instances with different seeds can run in parallel,
which is the contract Monte Carlo sweeps rely on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import criticality as crit
from . import fabric as fab
from . import faults as flt
from . import lockstep
from . import supervisor as sup
from . import workload
from .engine import MASK64, EventQueue, StreamPool, mix64
from .scenario import Scenario, TileGroupConfig
from .tiles import (
    ACTIVE, BOOTING, DEFUNCT, IDLE_SPARE, REBOOTING, SUSPECT, UPDATING,
    RUN_THREADS, RunWindow, Tile, TileGroup, ThreadGroup, scheduler_step,
)
from .trace import Trace


@dataclass
class GroupCheckpoint:
    group_id: str
    index: int
    t0: int
    trigger: str
    participants: list[str]
    members: list[str]                       # roster as of checkpoint start
    checked: list[str]                       # thread ids validated this index
    written: dict[str, int] = field(default_factory=dict)
    resolved: bool = False
    completed: bool = False
    reports: dict[str, lockstep.CheckpointReport] = field(default_factory=dict)
    clique: list[str] = field(default_factory=list)
    outputs: dict[str, dict[str, workload.OutputRecord]] = field(default_factory=dict)
    boundary: dict[str, dict[str, tuple]] = field(default_factory=dict)
    deadline_handle: object = None
    resolve_handle: object = None
    grace: bool = False


@dataclass
class PendingUpdate:
    group_id: str
    donor: Optional[str]
    reason: str              # "state-update" | "activation"
    since: int
    fault_ids: list[int] = field(default_factory=list)


@dataclass
class RepairJob:
    tile_id: str
    partition: str
    variants: list[int]
    tried_relocation: bool = False


@dataclass
class FaultRecord:
    event: flt.FaultEvent
    applied: bool = False
    detected_at: Optional[int] = None
    outcome: Optional[str] = None


class Simulation:
    def __init__(self, scenario: Scenario, until: Optional[int] = None):
        self.scenario = scenario
        self.horizon = min(until, scenario.horizon) if until else scenario.horizon
        self.queue = EventQueue()
        self.streams = StreamPool(scenario.seed)
        self.trace = Trace()
        self.costs = lockstep.CheckpointCost(context_switch=scenario.costs.context_switch)

        partitions = [
            fab.Partition(t.partition, cell_count=scenario.fabric.cells_per_partition,
                          hosted_tile=t.tile_id)
            for t in scenario.tiles
        ]
        for i in range(scenario.fabric.extra_partitions):
            partitions.append(
                fab.Partition(f"free{i}", cell_count=scenario.fabric.cells_per_partition))
        if scenario.fabric.variants is not None:
            variants = [fab.ConfigVariant(f"v{i}", frozenset(fp))
                        for i, fp in enumerate(scenario.fabric.variants)]
        else:
            variants = fab.default_variants(scenario.fabric.cells_per_partition,
                                            anchor=scenario.fabric.anchor_cells)
        shared_variants = None
        if scenario.fabric.shared_variants is not None:
            shared_variants = [fab.ConfigVariant(f"s{i}", frozenset(fp))
                               for i, fp in enumerate(scenario.fabric.shared_variants)]
        self.fabric = fab.Fabric(partitions, variants, shared_variants,
                                 shared_cells=scenario.fabric.shared_cells)

        self.tiles: dict[str, Tile] = {
            t.tile_id: Tile(t.tile_id, t.partition, capacity=t.capacity)
            for t in scenario.tiles
        }

        self.thread_groups: dict[str, ThreadGroup] = {}
        for tgc in scenario.thread_groups:
            specs = [scenario.threads[tid] for tid in tgc.threads]
            self.thread_groups[tgc.tg_id] = ThreadGroup(tg_id=tgc.tg_id, threads=specs)

        self.groups: dict[str, TileGroup] = {}
        self.group_order: list[str] = []
        for gc in scenario.tile_groups:
            self._make_group(gc)

        self.supervisor = sup.Supervisor(
            transient_threshold=scenario.supervisor.transient_threshold,
            defunct_threshold=scenario.supervisor.defunct_threshold,
            window_checkpoints=scenario.supervisor.window_checkpoints,
            watchdog_period=scenario.watchdog_period(),
            spare_pool=[t.tile_id for t in scenario.tiles if t.spare],
        )

        self.timers: dict[str, object] = {}
        self.ctxs: dict[str, GroupCheckpoint] = {}
        self.pending_updates: dict[str, PendingUpdate] = {}
        self.repair_jobs: dict[str, RepairJob] = {}
        self.shared_blocked = False
        self.shared_epoch = 0
        self.full_reconfig = False
        self.watchdog_handle = None
        self.loss_of_mission = False
        self.finished = False
        self.tg_active: dict[str, bool] = {}
        self.fault_records: dict[int, FaultRecord] = {}
        self.open_tile_faults: dict[str, list[int]] = {}
        self.open_partition_faults: dict[str, list[int]] = {}
        self.open_shared_faults: list[int] = []
        self.oracle_divergences = 0
        self._stage3_seq = 0

    # ------------------------------------------------------------------
    # construction helpers

    def _make_group(self, gc: TileGroupConfig) -> TileGroup:
        scenario = self.scenario
        base = scenario.base_period(gc)
        group = TileGroup(
            group_id=gc.group_id,
            members=list(gc.members),
            thread_groups=list(gc.thread_groups),
            base_period=base,
            comparison_deadline=scenario.comparison_deadline(gc),
            grace_period=scenario.grace_period(gc),
        )
        for tg_id in gc.thread_groups:
            tg = self.thread_groups[tg_id]
            for spec in tg.threads:
                tg.check_divisor[spec.thread_id] = max(1, spec.checkpoint_period // base)
        self.groups[gc.group_id] = group
        self.group_order.append(gc.group_id)
        return group

    def group_thread_ids(self, group: TileGroup) -> list[str]:
        return [
            spec.thread_id
            for tg_id in group.thread_groups
            for spec in self.thread_groups[tg_id].threads
        ]

    def group_divisors(self, group: TileGroup) -> dict[str, int]:
        out = {}
        for tg_id in group.thread_groups:
            out.update(self.thread_groups[tg_id].check_divisor)
        return out

    def _participants(self, group: TileGroup) -> list[str]:
        return [m for m in group.members
                if self.tiles[m].status in (ACTIVE, SUSPECT)]

    # ------------------------------------------------------------------
    # run loop

    def run(self) -> Trace:
        self.trace.emit(0, "sim", "run-start",
                        scenario=self.scenario.name, seed=self.scenario.seed,
                        horizon=self.horizon,
                        tg_map={tgc.tg_id: list(tgc.threads)
                                for tgc in self.scenario.thread_groups},
                        config=hashlib.blake2b(
                            self.scenario.canonical_json().encode(), digest_size=8
                        ).hexdigest())
        self._initial_boot()
        self._schedule_faults()
        self._arm_watchdog(0)

        while not self.finished:
            nxt = self.queue.peek_time()
            if nxt is None or nxt > self.horizon:
                break
            self.dispatch(self.queue.advance())

        end = self.queue.now if self.loss_of_mission else self.horizon
        reason = "loss-of-mission" if self.loss_of_mission else "horizon"
        self.trace.emit(end, "sim", "run-end", reason=reason)
        return self.trace

    def dispatch(self, ev):
        handler = getattr(self, "_on_" + ev.kind.replace("-", "_"))
        handler(**ev.payload)

    def _initial_boot(self):
        for tile in self.tiles.values():
            self._boot_tile(tile, initial=True)
        for gid in self.group_order:
            self._set_tg_active(self.groups[gid], True, 0)
            self.timers[gid] = self.queue.schedule(0, "timer-checkpoint", {"group_id": gid})

    def _schedule_faults(self):
        space = flt.TargetSpace(
            tiles=[t.tile_id for t in self.scenario.tiles],
            threads_on={
                t.tile_id: [
                    tid for g in self.scenario.tile_groups if t.tile_id in g.members
                    for tid in self.scenario.group_threads(g)
                ]
                for t in self.scenario.tiles
            },
            state_words={tid: spec.state_words
                         for tid, spec in self.scenario.threads.items()},
            partitions=[t.partition for t in self.scenario.tiles] + [fab.SHARED],
            cells_per_partition={
                **{t.partition: self.scenario.fabric.cells_per_partition
                   for t in self.scenario.tiles},
                fab.SHARED: self.scenario.fabric.shared_cells,
            },
        )
        events = flt.generate(self.scenario.profile, self.horizon,
                              self.streams.get("faults"), space)
        for ev in events:
            self.fault_records[ev.fault_id] = FaultRecord(event=ev)
            self.queue.schedule(ev.at, "fault-arrival", {"fault_id": ev.fault_id})

    # ------------------------------------------------------------------
    # boot and reboot

    def _boot_tile(self, tile: Tile, initial: bool = False):
        now = self.queue.now
        if not self.fabric.self_test(tile.partition):
            _, evidence = self.fabric.validate_partition(tile.partition)
            self.trace.emit(now, tile.tile_id, "boot-failed",
                            tile=tile.tile_id, evidence=sorted(evidence))
            tile.set_status(DEFUNCT)
            faults_here = self.open_tile_faults.pop(tile.tile_id, [])
            self.open_partition_faults.setdefault(tile.partition, []).extend(faults_here)
            self._start_repair(tile.tile_id)
            return
        tile.persist_corrupt = False
        for spec in self.scenario.threads.values():
            tile.threads[spec.thread_id] = workload.init_thread(spec, tile.tile_id)

        member_of = [gid for gid in self.group_order
                     if tile.tile_id in self.groups[gid].members]
        if member_of:
            tile.set_status(ACTIVE)
            for gid in member_of:
                group = self.groups[gid]
                tile.groups.append(gid)
                tile.hosted_groups.update(group.thread_groups)
                for tg_id in group.thread_groups:
                    win = RunWindow()
                    win.resume(now)
                    tile.windows[tg_id] = win
            self.trace.emit(now, tile.tile_id, "boot", assigned=member_of)
            if not initial:
                for gid in member_of:
                    self._maybe_start_boot_checkpoint(self.groups[gid])
        else:
            self.trace.emit(now, tile.tile_id, "boot", assigned=[])
            self.trace.emit(now, tile.tile_id, "tile-boot-checkpoint", tile=tile.tile_id)
            tile.set_status(IDLE_SPARE)
            self.supervisor.return_spare(tile.tile_id)
            self.trace.emit(now, tile.tile_id, "spare-pool-enter", tile=tile.tile_id)
            if not initial:
                for fid in self.open_tile_faults.pop(tile.tile_id, []):
                    self._set_outcome(fid, "corrected")
                self._restore_groups()

    def _maybe_start_boot_checkpoint(self, group: TileGroup):
        """After a reboot the group checkpoints immediately, once every
        member is back up."""
        if all(self.tiles[m].status == ACTIVE for m in group.members):
            self._set_tg_active(group, True, self.queue.now)
            self.start_checkpoint(group, trigger="boot")

    def _reboot_tile(self, tile: Tile, schedule: bool = True):
        now = self.queue.now
        tile.set_status(REBOOTING)
        tile.vmem.clear()
        tile.threads.clear()
        if tile.tile_id in self.supervisor.spare_pool:
            self.supervisor.spare_pool.remove(tile.tile_id)
        if tile.sefi_blocked:
            tile.sefi_blocked = False
            tile.sefi_epoch += 1
            self.trace.emit(now, tile.tile_id, "sefi-cleared", target=tile.tile_id)
        self.pending_updates.pop(tile.tile_id, None)
        if schedule:
            self.queue.schedule(now + self.scenario.costs.boot_time,
                                "tile-reboot-done", {"tile_id": tile.tile_id})

    def _on_tile_reboot_done(self, tile_id: str):
        tile = self.tiles[tile_id]
        if tile.status != REBOOTING:
            return
        tile.set_status(BOOTING)
        self._boot_tile(tile)

    # ------------------------------------------------------------------
    # checkpoint cycle

    def start_checkpoint(self, group: TileGroup, trigger: str):
        now = self.queue.now
        self._cancel_timer(group.group_id)
        group.checkpoint_index += 1
        index = group.checkpoint_index
        participants = self._participants(group)
        divisors = self.group_divisors(group)
        thread_ids = self.group_thread_ids(group)
        checked = lockstep.checked_threads(thread_ids, divisors, index)
        ctx = GroupCheckpoint(
            group_id=group.group_id, index=index, t0=now, trigger=trigger,
            participants=participants, members=list(group.members), checked=checked,
        )
        self.ctxs[group.group_id] = ctx
        self.trace.emit(now, group.group_id, "checkpoint-start",
                        group=group.group_id, index=index, trigger=trigger,
                        participants=participants)
        if not participants:
            ctx.resolved = ctx.completed = True
            self._arm_timer(group, now + group.period)
            return

        specs = {tid: self.scenario.threads[tid] for tid in thread_ids}
        for m in participants:
            tile = self.tiles[m]
            self._pause_tile_groups(tile, group, now)
            if tile.status == ACTIVE:
                ctx.boundary[m] = {
                    tid: (tuple(tile.threads[tid].state), tile.threads[tid].cycle_counter)
                    for tid in checked
                }
                for tid in thread_ids:
                    if specs[tid].emits_output and not tile.sefi_blocked:
                        rec = workload.emit_output(tile.threads[tid])
                        if rec is not None:
                            ctx.outputs.setdefault(tid, {})[m] = rec
            if tile.sefi_blocked:
                self.trace.emit(now, m, "checkpoint-blocked",
                                tile=m, group=group.group_id, index=index)
                continue
            delay = max((specs[tid].viable_delay for tid in thread_ids), default=0)
            delay = min(delay, group.comparison_deadline)
            duration = delay + self.costs.checksum_duration(specs[tid] for tid in checked)
            self.queue.schedule(now + duration, "checksums-ready",
                                {"group_id": group.group_id, "index": index, "tile_id": m})
        ctx.deadline_handle = self.queue.schedule(
            now + group.comparison_deadline, "compare-deadline",
            {"group_id": group.group_id, "index": index})

    def _pause_tile_groups(self, tile: Tile, group: TileGroup, now: int):
        for tg_id in group.thread_groups:
            win = tile.windows.get(tg_id)
            if win and win.running:
                self._advance_window(tile, tg_id, now)
                win.running = False

    def _advance_window(self, tile: Tile, tg_id: str, now: int):
        win = tile.windows.get(tg_id)
        if win is None or not win.running or now <= win.advanced_to:
            return
        tg = self.thread_groups[tg_id]
        slipped = False
        for spec in tg.threads:
            cycles = win.cycles(now, spec.work_per_tick)
            if cycles:
                ts = tile.threads[spec.thread_id]
                ts = workload.execute_slice(ts, cycles * spec.work_per_tick)
                if tile.persist_corrupt:
                    ts.state[0] ^= mix64(tile.noise_seed ^ ts.cycle_counter) | 1
                    ts.corrupted = True
                    slipped = True
                tile.threads[spec.thread_id] = ts
        win.advanced_to = now
        if slipped:
            self.trace.emit(now, tile.tile_id, "persistent-corruption", tile=tile.tile_id)

    def _current_ctx(self, group_id: str, index: int) -> Optional[GroupCheckpoint]:
        ctx = self.ctxs.get(group_id)
        if ctx is None or ctx.index != index or ctx.resolved:
            return None
        return ctx

    def _on_timer_checkpoint(self, group_id: str):
        group = self.groups.get(group_id)
        if group is None:
            return
        self.timers.pop(group_id, None)
        self.start_checkpoint(group, trigger="timer")

    def _on_checksums_ready(self, group_id: str, index: int, tile_id: str):
        ctx = self._current_ctx(group_id, index)
        if ctx is None or tile_id not in ctx.participants:
            return
        tile = self.tiles[tile_id]
        if not tile.is_member:
            return
        self.write_validation(tile, self.groups[group_id], ctx)

    def write_validation(self, tile: Tile, group: TileGroup, ctx: GroupCheckpoint):
        """Compute and store this tile's scheduled checksums. Losing the
        write silently is exactly how an interface SEFI manifests."""
        now = self.queue.now
        if tile.sefi_blocked:
            self.trace.emit(now, tile.tile_id, "validation-write-lost",
                            tile=tile.tile_id, group=group.group_id, index=ctx.index)
            return
        for tid in ctx.checked:
            checksum = workload.checksum_callback(tile.threads[tid])
            tile.vmem.write_checksum(tile.tile_id, tid, ctx.index, checksum)
        tile.vmem.mark_ready(tile.tile_id, group.group_id, ctx.index)
        ctx.written[tile.tile_id] = now
        self.trace.emit(now, tile.tile_id, "validation-write",
                        tile=tile.tile_id, group=group.group_id, index=ctx.index,
                        threads=len(ctx.checked))
        if all(m in ctx.written for m in ctx.participants) and ctx.resolve_handle is None:
            ctx.resolve_handle = self.queue.schedule(
                now, "compare-resolve", {"group_id": group.group_id, "index": ctx.index})

    def _on_compare_resolve(self, group_id: str, index: int):
        self._resolve_checkpoint(group_id, index)

    def _on_compare_deadline(self, group_id: str, index: int):
        self._resolve_checkpoint(group_id, index)

    def _resolve_checkpoint(self, group_id: str, index: int):
        ctx = self._current_ctx(group_id, index)
        if ctx is None:
            return
        ctx.resolved = True
        for handle in (ctx.deadline_handle, ctx.resolve_handle):
            if handle is not None:
                handle.cancel()
        group = self.groups[group_id]
        now = self.queue.now
        deadline_at = ctx.t0 + group.comparison_deadline

        loss = self.scenario.features.signal_loss_prob
        for m in ctx.participants:
            tile = self.tiles[m]
            if m not in ctx.written or tile.sefi_blocked:
                continue  # never wrote, or its interface is down: stays silent
            report = lockstep.compare_with_siblings(
                me=m,
                members=ctx.members,
                written_at=ctx.written,
                deadline_at=deadline_at,
                checked=ctx.checked,
                checkpoint_index=index,
                read_checksum=lambda owner, th: self._read_checksum(owner, th, index),
                reads_blocked=self.shared_blocked,
            )
            if loss > 0:
                roll = (self.streams.get("signal-loss").uniform64() >> 11) * 2.0**-53
                if roll < loss:
                    self.trace.emit(now, m, "signal-lost",
                                    tile=m, group=group_id, index=index)
                    continue
            ctx.reports[m] = report
            self.trace.emit(now, m, "checkpoint-report",
                            tile=m, group=group_id, index=index,
                            verdicts=dict(sorted(report.verdicts.items())),
                            completed_at=report.completed_at)

        self._vote_outputs(group, ctx)
        self._oracle_check(group, ctx)

        if not ctx.reports:
            # total silence: the supervisor cannot even tell a checkpoint
            # happened, so it stays passive; the group stalls until the
            # watchdog resets the system
            self.trace.emit(now, "supervisor", "verdict",
                            group=group_id, index=index, result="silent",
                            faulty=[], clique=[],
                            participants=len(ctx.participants),
                            target_size=group.target_size)
            ctx.completed = True
            self._set_tg_active(group, False, now)
            return

        verdict = sup.arbitrate(group_id, index, ctx.participants, ctx.reports)
        ctx.clique = list(verdict.clique)
        self.supervisor.kick(now)
        self._arm_watchdog(now)
        result = ("all-agree" if verdict.all_agree
                  else "unresolvable" if verdict.unresolvable else "faulty")
        self.trace.emit(now, "supervisor", "verdict",
                        group=group_id, index=index, result=result,
                        faulty=verdict.faulty, clique=verdict.clique,
                        participants=len(ctx.participants), target_size=group.target_size)

        if verdict.all_agree:
            self._finish_agreeing_checkpoint(group, ctx, verdict)
        elif verdict.unresolvable:
            self._handle_unresolvable(group, ctx, verdict)
        else:
            self._handle_faulty(group, ctx, verdict)

    def _read_checksum(self, owner: str, thread_id: str, index: int):
        return self.tiles[owner].vmem.checksum_of(thread_id, index)

    def _vote_outputs(self, group: TileGroup, ctx: GroupCheckpoint):
        now = self.queue.now
        voting = self.scenario.features.output_voting
        for tid in sorted(ctx.outputs):
            records = ctx.outputs[tid]
            if len(records) < 2:
                continue
            result = lockstep.vote_outputs(records, voting)
            if result.divergent or result.no_majority:
                self.trace.emit(now, group.group_id, "output-vote",
                                group=group.group_id, index=ctx.index, thread=tid,
                                cycle=result.cycle_counter,
                                divergent=result.divergent,
                                suppressed=bool(voting),
                                no_majority=result.no_majority,
                                escaped=0 if voting else len(result.divergent))

    def _oracle_check(self, group: TileGroup, ctx: GroupCheckpoint):
        """Compare full boundary states behind the protocol's back: a pair
        that diverged yet mutually agreed is an undetected divergence."""
        now = self.queue.now
        for i, a in enumerate(ctx.participants):
            for b in ctx.participants[i + 1:]:
                ra, rb = ctx.reports.get(a), ctx.reports.get(b)
                if not ra or not rb:
                    continue
                if (ra.verdicts.get(b) != lockstep.AGREE
                        or rb.verdicts.get(a) != lockstep.AGREE):
                    continue
                sa, sb = ctx.boundary.get(a), ctx.boundary.get(b)
                if sa is None or sb is None:
                    continue
                for tid in ctx.checked:
                    if sa.get(tid) != sb.get(tid):
                        self.oracle_divergences += 1
                        self.trace.emit(now, "oracle", "oracle-divergence",
                                        group=group.group_id, index=ctx.index,
                                        thread=tid, tiles=[a, b])

    # -- checkpoint outcomes ------------------------------------------------

    def _joiners(self, group: TileGroup) -> list[str]:
        return [m for m in group.members
                if m in self.pending_updates
                and self.pending_updates[m].group_id == group.group_id
                and self.pending_updates[m].reason == "activation"]

    def _finish_agreeing_checkpoint(self, group: TileGroup, ctx: GroupCheckpoint,
                                    verdict: sup.Verdict):
        joiners = self._joiners(group)
        if joiners:
            donor = next((m for m in group.members if m in verdict.clique), None)
            for j in joiners:
                self.pending_updates[j].donor = donor
            if donor is not None:
                self.propagate_state(group, ctx, [donor])
            self._enter_grace(group, ctx)
        else:
            self._finish_checkpoint(group, ctx, "all-agree")

    def _finish_checkpoint(self, group: TileGroup, ctx: GroupCheckpoint, result: str):
        now = self.queue.now
        ctx.completed = True
        self.trace.emit(now, group.group_id, "checkpoint-end",
                        group=group.group_id, index=ctx.index,
                        duration=now - ctx.t0, result=result,
                        tiles=[m for m in group.members if self.tiles[m].is_member])
        self._resume_group(group, now)
        self._arm_timer(group, now + group.period)

    def _resume_group(self, group: TileGroup, now: int):
        for m in group.members:
            tile = self.tiles[m]
            if scheduler_step(tile) == RUN_THREADS:
                for tg_id in group.thread_groups:
                    win = tile.windows.get(tg_id)
                    if win:
                        win.resume(now)

    def _enter_grace(self, group: TileGroup, ctx: GroupCheckpoint):
        if ctx.grace:
            return
        ctx.grace = True
        self.queue.schedule(self.queue.now + group.grace_period, "grace-expiry",
                            {"group_id": group.group_id, "index": ctx.index})

    def propagate_state(self, group: TileGroup, ctx: GroupCheckpoint, writers: list[str]):
        """Schedule the synchronization callbacks of every healthy writer
        that saw the mismatch (or was asked to donate)."""
        specs = [self.scenario.threads[t] for t in self.group_thread_ids(group)]
        for w in writers:
            tile = self.tiles[w]
            missing = [s for s in specs
                       if tile.vmem.snapshot_of(s.thread_id, ctx.index) is None]
            if not missing:
                continue  # state already in validation memory; callback omitted
            duration = self.costs.sync_duration(missing)
            self.queue.schedule(self.queue.now + duration, "sync-written",
                                {"group_id": group.group_id, "index": ctx.index,
                                 "tile_id": w})

    def _on_sync_written(self, group_id: str, index: int, tile_id: str):
        group = self.groups.get(group_id)
        if group is None:
            return
        tile = self.tiles[tile_id]
        now = self.queue.now
        if not tile.is_member:
            return
        if tile.sefi_blocked:
            self.trace.emit(now, tile_id, "state-propagation-lost",
                            tile=tile_id, group=group_id, index=index)
            return
        threads = self.group_thread_ids(group)
        for tid in threads:
            snap = workload.sync_callback(tile.threads[tid])
            tile.vmem.write_snapshot(tile_id, index, snap)
        self.trace.emit(now, tile_id, "state-propagation",
                        tile=tile_id, group=group_id, index=index, threads=len(threads))

    def _handle_faulty(self, group: TileGroup, ctx: GroupCheckpoint, verdict: sup.Verdict):
        now = self.queue.now
        if not group.correction_enabled:
            self.trace.emit(now, "supervisor", "detection-only",
                            group=group.group_id, index=ctx.index, faulty=verdict.faulty)
            for f in verdict.faulty:
                for fid in self.open_tile_faults.pop(f, []):
                    self._mark_detected(fid, f, group, ctx)
                    self._set_outcome(fid, "degraded")
            self._finish_checkpoint(group, ctx, "detect-only")
            return

        donor = next((m for m in group.members if m in verdict.clique), None)
        writers = sorted(
            {m for m, r in ctx.reports.items() if r.detected_mismatch}
            | ({donor} if donor else set()),
            key=ctx.members.index,
        )
        self.propagate_state(group, ctx, writers)
        for f in verdict.faulty:
            self._apply_fault_action(group, ctx, f, donor)
        for j in self._joiners(group):
            if self.pending_updates[j].donor is None:
                self.pending_updates[j].donor = donor
        self._enter_grace(group, ctx)

    def _apply_fault_action(self, group: TileGroup, ctx: GroupCheckpoint,
                            faulty_id: str, donor: str):
        now = self.queue.now
        tile = self.tiles[faulty_id]
        action = self.supervisor.handle_fault(faulty_id, now, group.period)
        open_faults = self.open_tile_faults.pop(faulty_id, [])
        for fid in open_faults:
            self._mark_detected(fid, faulty_id, group, ctx)

        outcome = None
        if action.kind == sup.STATE_UPDATE:
            self.command_tile(faulty_id, "state-update", donor=donor, group=group)
            pending = self.pending_updates.get(faulty_id)
            if pending is not None:
                # outcome settles when the update actually lands
                pending.fault_ids.extend(open_faults)
            else:  # command lost on a blocked interface: the fault stays open
                self.open_tile_faults.setdefault(faulty_id, []).extend(open_faults)
            open_faults = []
        elif action.kind == sup.REPLACE:
            self._replace_member(group, faulty_id, action.spare)
            self._detach_everywhere(faulty_id)
            self._activate_spare(action.spare, group, donor)
            self.command_tile(faulty_id, "reboot")
            outcome = "replaced"
        elif action.kind == sup.DEFUNCT_STAGE2:
            if action.spare:
                self._replace_member(group, faulty_id, action.spare)
                self._activate_spare(action.spare, group, donor)
            else:
                self._drop_member(group, faulty_id)
            self._detach_everywhere(faulty_id)
            self.trace.emit(now, "supervisor", "command", tile=faulty_id, command="halt")
            tile.set_status(DEFUNCT)
            self.open_partition_faults.setdefault(tile.partition, []).extend(open_faults)
            open_faults = []
            self._start_repair(faulty_id)
        else:  # STAGE2_NO_SPARE
            self.trace.emit(now, "supervisor", "stage2-escalation",
                            tile=faulty_id, reason="no-spare")
            self._drop_member(group, faulty_id)
            self._detach_everywhere(faulty_id)
            self.open_tile_faults.setdefault(faulty_id, []).extend(open_faults)
            open_faults = []
            self.command_tile(faulty_id, "reboot")

        for fid in open_faults:
            self._set_outcome(fid, outcome)

    def _detach_everywhere(self, tile_id: str):
        """A rebooted or halted tile takes all of its replicas with it: pull
        it from every group roster (replacement fills only one slot)."""
        for gid in self.group_order:
            self._drop_member(self.groups[gid], tile_id)

    def command_tile(self, tile_id: str, command: str, donor: Optional[str] = None,
                     group: Optional[TileGroup] = None):
        """Supervisor-to-tile command over the low-level debug interface."""
        now = self.queue.now
        tile = self.tiles[tile_id]
        if tile.status == DEFUNCT and command != "repair-reboot":
            self.trace.emit(now, "supervisor", "command-rejected",
                            tile=tile_id, command=command, reason="defunct")
            return
        if command == "state-update":
            tile.set_status(SUSPECT)
            if tile.sefi_blocked:
                self.trace.emit(now, "supervisor", "command-lost",
                                tile=tile_id, command=command)
                return
            self.trace.emit(now, "supervisor", "command",
                            tile=tile_id, command=command, donor=donor)
            self.pending_updates[tile_id] = PendingUpdate(
                group_id=group.group_id, donor=donor, reason="state-update", since=now)
        elif command in ("reboot", "repair-reboot"):
            self.trace.emit(now, "supervisor", "command", tile=tile_id, command="reboot")
            self._reboot_tile(tile)
        else:
            raise ValueError(f"unknown command {command!r}")

    def _activate_spare(self, spare_id: str, group: TileGroup, donor: Optional[str]):
        now = self.queue.now
        spare = self.tiles[spare_id]
        self.trace.emit(now, "supervisor", "command",
                        tile=spare_id, command="activate-with-mapping",
                        group=group.group_id, thread_groups=list(group.thread_groups))
        spare.set_status(UPDATING)
        spare.groups.append(group.group_id)
        spare.hosted_groups.update(group.thread_groups)
        for tg_id in group.thread_groups:
            spare.windows[tg_id] = RunWindow()
        self.pending_updates[spare_id] = PendingUpdate(
            group_id=group.group_id, donor=donor, reason="activation", since=now)

    def _replace_member(self, group: TileGroup, old: str, new: str):
        group.members[group.members.index(old)] = new

    def _drop_member(self, group: TileGroup, tile_id: str):
        if tile_id in group.members:
            group.members.remove(tile_id)

    def _handle_unresolvable(self, group: TileGroup, ctx: GroupCheckpoint,
                             verdict: sup.Verdict):
        now = self.queue.now
        if not group.correction_enabled:
            self.trace.emit(now, "supervisor", "detection-only",
                            group=group.group_id, index=ctx.index,
                            faulty=[], unresolvable=True)
            for m in ctx.participants:
                for fid in self.open_tile_faults.pop(m, []):
                    self._mark_detected(fid, m, group, ctx)
                    self._set_outcome(fid, "degraded")
            self._finish_checkpoint(group, ctx, "detect-only")
            return
        if verdict.all_miss and ctx.reports and len(ctx.reports) == len(ctx.participants):
            # every member is alive yet nobody could read a sibling: the
            # shared interconnect itself is suspect
            self.trace.emit(now, "supervisor", "shared-fault-suspected",
                            group=group.group_id, index=ctx.index)
            for fid in self.open_shared_faults:
                self._mark_detected(fid, "shared", group, ctx)
            self.full_reconfigure()
            return
        self.trace.emit(now, "supervisor", "group-reboot",
                        group=group.group_id, index=ctx.index)
        self.trace.emit(now, group.group_id, "checkpoint-end",
                        group=group.group_id, index=ctx.index,
                        duration=now - ctx.t0, result="unresolvable",
                        tiles=list(ctx.participants))
        ctx.completed = True
        self._set_tg_active(group, False, now)
        for m in list(group.members):
            tile = self.tiles[m]
            for fid in self.open_tile_faults.pop(m, []):
                self._mark_detected(fid, m, group, ctx)
                self._set_outcome(fid, "corrected")
            if tile.is_member:
                self.command_tile(m, "reboot")

    # -- grace period and updates --------------------------------------------

    def _on_grace_expiry(self, group_id: str, index: int):
        group = self.groups.get(group_id)
        if group is None:
            return
        ctx = self.ctxs.get(group_id)
        if ctx is None or ctx.index != index or ctx.completed:
            return
        self.apply_update_and_resume(group, ctx)

    def apply_update_and_resume(self, group: TileGroup, ctx: GroupCheckpoint):
        """Close the recovery window: run update callbacks on tiles waiting
        for donor state, then resume the whole group together."""
        now = self.queue.now
        for m in list(group.members):
            pending = self.pending_updates.get(m)
            if pending is None or pending.group_id != group.group_id:
                continue
            tile = self.tiles[m]
            donor_id = pending.donor
            if donor_id is None and ctx.clique:
                donor_id = next((x for x in group.members if x in ctx.clique), None)
            donor = self.tiles[donor_id] if donor_id else None
            threads = self.group_thread_ids(group)
            snapshots = {}
            ok = (donor is not None and donor.is_member
                  and not tile.sefi_blocked and not self.shared_blocked)
            if ok:
                for tid in threads:
                    snap = donor.vmem.snapshot_of(tid, ctx.index)
                    if snap is None:
                        ok = False
                        break
                    snapshots[tid] = snap
            del self.pending_updates[m]
            if ok:
                for tid in threads:
                    ts = workload.update_callback(tile.threads[tid], snapshots[tid])
                    ts.corrupted = donor.threads[tid].corrupted
                    tile.threads[tid] = ts
                tile.set_status(ACTIVE)
                self.trace.emit(now, m, "update-success",
                                tile=m, group=group.group_id, donor=donor_id,
                                threads=len(threads))
                for fid in pending.fault_ids:
                    self._set_outcome(fid, "corrected")
            else:
                reason = "no-donor" if donor is None else "donor-snapshots-missing"
                self.trace.emit(now, m, "update-failed",
                                tile=m, group=group.group_id, reason=reason)
                self.open_tile_faults.setdefault(m, []).extend(pending.fault_ids)
                if pending.reason == "activation":
                    # a joining spare that cannot sync goes back through reboot
                    self._drop_member(group, m)
                    self.command_tile(m, "reboot")
                # a suspect member just stays suspect and will miss again
        self._finish_checkpoint(group, ctx, "recovered")

    # ------------------------------------------------------------------
    # faults

    def _on_fault_arrival(self, fault_id: int):
        self.apply_fault(self.fault_records[fault_id])

    def apply_fault(self, record: FaultRecord):
        ev = record.event
        now = self.queue.now
        kind = ev.kind

        def absorbed(reason: str):
            self.trace.emit(now, "injector", "fault",
                            id=ev.fault_id, fault_kind=kind, target=ev.target_label(),
                            disposition="absorbed", reason=reason)

        def applied(**extra):
            record.applied = True
            self.trace.emit(now, "injector", "fault",
                            id=ev.fault_id, fault_kind=kind, target=ev.target_label(),
                            disposition="applied", **extra)

        if kind == flt.MEMORY_WORD and self.scenario.features.ecc:
            absorbed("ecc")
            return

        if kind in (flt.TRANSIENT_STATE, flt.MEMORY_WORD):
            tile = self.tiles.get(ev.tile or "")
            if tile is None or not tile.is_member or ev.thread not in tile.threads:
                absorbed("no-target")
                return
            tg_id = next(
                (tg for tg in sorted(tile.hosted_groups)
                 if ev.thread in (s.thread_id for s in self.thread_groups[tg].threads)),
                None,
            )
            if tg_id is None:
                absorbed("no-target")
                return
            self._advance_window(tile, tg_id, now)
            ts = tile.threads[ev.thread]
            for k, mask in enumerate(ev.masks):
                ts.state[(ev.word + k) % len(ts.state)] ^= mask & MASK64
            ts.corrupted = True
            applied(words=len(ev.masks))
            self.open_tile_faults.setdefault(ev.tile, []).append(ev.fault_id)
        elif kind == flt.TRANSIENT_VMEM:
            tile = self.tiles.get(ev.tile or "")
            if tile is None or not tile.is_member:
                absorbed("no-target")
                return
            open_idx = None
            for gid in tile.groups:
                ctx = self.ctxs.get(gid)
                if (ctx and not ctx.resolved
                        and tile.vmem.checksum_of(ev.thread, ctx.index) is not None):
                    open_idx = ctx.index
                    break
            if open_idx is None:
                absorbed("stale-entry")
                return
            tile.vmem.entries[(ev.thread, open_idx)].checksum ^= ev.masks[0] or 1
            applied(index=open_idx)
            self.open_tile_faults.setdefault(ev.tile, []).append(ev.fault_id)
        elif kind == flt.PERMANENT_CELL:
            self.fabric.add_damage(ev.partition, ev.cell, ev.flavor)
            if ev.partition == fab.SHARED:
                applied(flavor=ev.flavor)
                self.open_shared_faults.append(ev.fault_id)
                return
            part = self.fabric.partitions[ev.partition]
            tile = self.tiles.get(part.hosted_tile or "")
            variant = self.fabric.tile_variants[part.active_variant]
            if tile is not None and tile.is_member and ev.cell in variant.footprint:
                tile.persist_corrupt = True
                applied(flavor=ev.flavor, corrupting=True)
                self.open_tile_faults.setdefault(tile.tile_id, []).append(ev.fault_id)
                self.open_partition_faults.setdefault(ev.partition, []).append(ev.fault_id)
            else:
                absorbed("latent-cell")
        elif kind == flt.SEFI_TILE:
            tile = self.tiles.get(ev.tile or "")
            if tile is None or tile.status in (DEFUNCT, REBOOTING, BOOTING):
                absorbed("no-target")
                return
            tile.sefi_blocked = True
            tile.sefi_epoch += 1
            applied(duration=ev.duration)
            self.open_tile_faults.setdefault(ev.tile, []).append(ev.fault_id)
            self.queue.schedule(now + ev.duration, "sefi-expiry",
                                {"target": ev.tile, "epoch": tile.sefi_epoch,
                                 "fault_id": ev.fault_id})
        elif kind == flt.SEFI_SHARED:
            self.shared_blocked = True
            self.shared_epoch += 1
            applied(duration=ev.duration)
            self.open_shared_faults.append(ev.fault_id)
            self.queue.schedule(now + ev.duration, "sefi-expiry",
                                {"target": fab.SHARED, "epoch": self.shared_epoch,
                                 "fault_id": ev.fault_id})
        else:
            raise ValueError(f"unhandled fault kind {kind!r}")

    def _on_sefi_expiry(self, target: str, epoch: int, fault_id: int):
        now = self.queue.now
        if target == fab.SHARED:
            if epoch != self.shared_epoch or not self.shared_blocked:
                return
            self.shared_blocked = False
            self.shared_epoch += 1
        else:
            tile = self.tiles[target]
            if epoch != tile.sefi_epoch or not tile.sefi_blocked:
                return
            tile.sefi_blocked = False
            tile.sefi_epoch += 1
        self.trace.emit(now, "injector", "sefi-cleared", target=target)
        record = self.fault_records.get(fault_id)
        if record and record.detected_at is None:
            # the block expired without ever being observed
            if target == fab.SHARED:
                if fault_id in self.open_shared_faults:
                    self.open_shared_faults.remove(fault_id)
            else:
                lst = self.open_tile_faults.get(target, [])
                if fault_id in lst:
                    lst.remove(fault_id)
            self._set_outcome(fault_id, "absorbed")

    # -- fault bookkeeping -----------------------------------------------------

    def _mark_detected(self, fault_id: int, tile_id: str, group: TileGroup,
                       ctx: GroupCheckpoint):
        record = self.fault_records.get(fault_id)
        if record is None or record.detected_at is not None:
            return
        now = self.queue.now
        record.detected_at = now
        self.trace.emit(now, "supervisor", "fault-detected",
                        id=fault_id, tile=tile_id, group=group.group_id,
                        index=ctx.index, latency=now - record.event.at)

    def _set_outcome(self, fault_id: int, outcome: Optional[str]):
        if outcome is None:
            return
        record = self.fault_records.get(fault_id)
        if record is None:
            return
        record.outcome = outcome
        self.trace.emit(self.queue.now, "supervisor", "fault-outcome",
                        id=fault_id, outcome=outcome)

    # ------------------------------------------------------------------
    # Stage 2: repair

    def repair_tile(self, tile_id: str):
        """Stage 2 entry point: iterate configuration variants over the
        tile's partition, then try relocating, then escalate."""
        self._start_repair(tile_id)

    def _start_repair(self, tile_id: str):
        now = self.queue.now
        if tile_id in self.repair_jobs:
            return
        tile = self.tiles[tile_id]
        job = RepairJob(
            tile_id=tile_id,
            partition=tile.partition,
            variants=list(range(len(self.fabric.tile_variants))),
        )
        self.repair_jobs[tile_id] = job
        self.trace.emit(now, "supervisor", "repair-start",
                        tile=tile_id, partition=tile.partition)
        self._repair_step(job)

    def _repair_step(self, job: RepairJob):
        now = self.queue.now
        if job.variants:
            variant = job.variants.pop(0)
            self.queue.schedule(now + self.scenario.costs.reconfig_duration,
                                "reconfiguration-done",
                                {"tile_id": job.tile_id, "partition": job.partition,
                                 "variant": variant})
            return
        if not job.tried_relocation:
            job.tried_relocation = True
            for free in self.fabric.free_partitions():
                viable = self.fabric.viable_variants(free)
                if viable:
                    self.trace.emit(now, "supervisor", "repair-relocate",
                                    tile=job.tile_id, source=job.partition, target=free)
                    old = job.partition
                    self.fabric.rebind(job.tile_id, free)
                    self.tiles[job.tile_id].partition = free
                    self.open_partition_faults.setdefault(free, []).extend(
                        self.open_partition_faults.pop(old, []))
                    job.partition = free
                    job.variants = viable
                    self._repair_step(job)
                    return
        evidence = sorted(self.fabric.damaged_cells(job.partition))
        self.trace.emit(now, "supervisor", "repair-exhausted",
                        tile=job.tile_id, partition=job.partition, evidence=evidence)
        del self.repair_jobs[job.tile_id]
        for fid in self.open_partition_faults.pop(job.partition, []):
            self._set_outcome(fid, "degraded")
        self.stage3_reallocate(reason=f"repair-exhausted:{job.tile_id}")

    def _on_reconfiguration_done(self, tile_id: str, partition: str, variant: int):
        job = self.repair_jobs.get(tile_id)
        if job is None or job.partition != partition:
            return
        now = self.queue.now
        ok = self.fabric.partial_reconfigure(partition, variant)
        passed, evidence = (self.fabric.validate_partition(partition) if ok
                            else (False, self.fabric.footprint_overlap(partition, variant)))
        self.trace.emit(now, "fabric", "reconfiguration",
                        partition=partition, variant=variant, ok=passed,
                        evidence=sorted(evidence))
        if not passed:
            self._repair_step(job)
            return
        self.trace.emit(now, "supervisor", "repair-success",
                        tile=tile_id, partition=partition, variant=variant)
        del self.repair_jobs[tile_id]
        tile = self.tiles[tile_id]
        tile.persist_corrupt = False
        for fid in self.open_partition_faults.pop(partition, []):
            self._set_outcome(fid, "repaired")
        self.supervisor.reset_counter(tile_id)
        self.command_tile(tile_id, "repair-reboot")

    def full_reconfigure(self):
        """Stage 2's last resort: rewrite the shared region, briefly halting
        and then rebooting the whole system."""
        if self.full_reconfig:
            return
        now = self.queue.now
        self.full_reconfig = True
        self.trace.emit(now, "supervisor", "full-reconfig-start")
        self._halt_all_tiles(now)
        self.queue.schedule(now + self.scenario.costs.full_reconfig_duration,
                            "full-reconfig-done", {})

    def _halt_all_tiles(self, now: int):
        for gid in self.group_order:
            group = self.groups[gid]
            self._cancel_timer(gid)
            ctx = self.ctxs.get(gid)
            if ctx and not ctx.resolved:
                ctx.resolved = ctx.completed = True
                self.trace.emit(now, gid, "checkpoint-aborted", group=gid, index=ctx.index)
            self._set_tg_active(group, False, now)
        for tile in self.tiles.values():
            if tile.status in (DEFUNCT, REBOOTING):
                continue
            for fid in self.open_tile_faults.pop(tile.tile_id, []):
                self._set_outcome(fid, "corrected")
            self._reboot_tile(tile, schedule=False)

    def _on_full_reconfig_done(self):
        now = self.queue.now
        self.full_reconfig = False
        viable = self.fabric.viable_variants(fab.SHARED)
        if not viable:
            self.trace.emit(now, "supervisor", "unrecoverable-system",
                            evidence=sorted(self.fabric.damaged_cells(fab.SHARED)))
            for fid in self.open_shared_faults:
                self._set_outcome(fid, "degraded")
            self.open_shared_faults.clear()
            self.loss_of_mission = True
            self.finished = True
            return
        current = self.fabric.shared.active_variant
        nxt = next((i for i in viable if i > current), viable[0])
        self.fabric.partial_reconfigure(fab.SHARED, nxt)
        self.trace.emit(now, "fabric", "full-reconfig-done", variant=nxt)
        if self.shared_blocked:
            self.shared_blocked = False
            self.shared_epoch += 1
            self.trace.emit(now, "injector", "sefi-cleared", target=fab.SHARED)
        for fid in self.open_shared_faults:
            self._set_outcome(fid, "repaired")
        self.open_shared_faults.clear()
        for tile in self.tiles.values():
            if tile.status == REBOOTING:
                self.queue.schedule(now + self.scenario.costs.boot_time,
                                    "tile-reboot-done", {"tile_id": tile.tile_id})
        self.supervisor.kick(now)
        self._arm_watchdog(now)

    # ------------------------------------------------------------------
    # watchdog

    def _arm_watchdog(self, now: int):
        if self.watchdog_handle is not None:
            self.watchdog_handle.cancel()
        self.watchdog_handle = self.queue.schedule(
            now + self.supervisor.watchdog_period, "watchdog-expiry", {})

    def _on_watchdog_expiry(self):
        now = self.queue.now
        if self.full_reconfig:
            self.trace.emit(now, "supervisor", "watchdog-suppressed")
            self._arm_watchdog(now)
            return
        if not self.supervisor.watchdog_expired(now):
            self._arm_watchdog(self.supervisor.watchdog_last_kick)
            return
        self.watchdog_tick()

    def watchdog_tick(self):
        """Watchdog fired: full system reset; fault counters are retained."""
        now = self.queue.now
        self.trace.emit(now, "supervisor", "watchdog-reset")
        self._halt_all_tiles(now)
        for tile in self.tiles.values():
            if tile.status == REBOOTING:
                self.queue.schedule(now + self.scenario.costs.boot_time,
                                    "tile-reboot-done", {"tile_id": tile.tile_id})
        self.supervisor.kick(now)
        self._arm_watchdog(now)

    # ------------------------------------------------------------------
    # Stage 3: mixed criticality

    def stage3_reallocate(self, reason: str) -> crit.Plan:
        now = self.queue.now
        healthy = {
            t.tile_id: Fraction(t.capacity)
            for t in self.scenario.tiles
            if self.tiles[t.tile_id].status in (ACTIVE, SUSPECT, UPDATING, IDLE_SPARE)
        }
        requests = []
        for tg_id, tg in self.thread_groups.items():
            if tg.deactivated:
                continue
            host = self._hosting_group(tg_id)
            current = tuple(m for m in host.members if m in healthy) if host else ()
            desired = min(s.checkpoint_period for s in tg.threads)
            requests.append(crit.AllocRequest(
                tg_id=tg_id,
                criticality=tg.criticality,
                threads=tuple(tg.threads),
                period=desired,
                current_tiles=current,
                period_factor=host.period_factor if host else 1,
            ))
        plan = crit.reallocate(healthy, requests, self.scenario.policy,
                               context_switch=self.costs.context_switch)
        self.trace.emit(now, "supervisor", "stage3-plan",
                        reason=reason,
                        entries=[{
                            "tg": e.tg_id, "tiles": list(e.tiles), "mode": e.mode,
                            "period_factor": e.period_factor, "levers": list(e.levers),
                        } for e in plan.entries])
        self._apply_plan(plan, {r.tg_id: r for r in requests})
        return plan

    def _hosting_group(self, tg_id: str) -> Optional[TileGroup]:
        for gid in self.group_order:
            if tg_id in self.groups[gid].thread_groups:
                return self.groups[gid]
        return None

    def _apply_plan(self, plan: crit.Plan, requests: dict[str, crit.AllocRequest]):
        now = self.queue.now
        for entry in plan.entries:
            host = self._hosting_group(entry.tg_id)
            current = requests[entry.tg_id].current_tiles
            if not entry.active:
                self._deactivate_tg(entry, host)
                continue
            same = (host is not None and set(entry.tiles) == set(current)
                    and set(host.members) == set(entry.tiles))
            if same and entry.period_factor == host.period_factor:
                if entry.mode == crit.MODE_DETECT_ONLY and host.correction_enabled:
                    host.correction_enabled = False
                    self.trace.emit(now, "supervisor", "tg-degraded",
                                    tg=entry.tg_id, mode=entry.mode,
                                    levers=list(entry.levers))
                continue
            if (same and entry.period_factor != host.period_factor
                    and len(host.thread_groups) == 1):
                host.period_factor = entry.period_factor
                for m in host.members:
                    self.trace.emit(now, m, "timer-adjusted",
                                    tile=m, group=host.group_id, period=host.period)
                if entry.mode == crit.MODE_DETECT_ONLY:
                    host.correction_enabled = False
                self.trace.emit(now, "supervisor", "tg-degraded",
                                tg=entry.tg_id, mode=entry.mode, levers=list(entry.levers))
                continue
            self.migrate_thread_group(entry, host, requests[entry.tg_id])

    def _deactivate_tg(self, entry: crit.PlanEntry, host: Optional[TileGroup]):
        now = self.queue.now
        tg = self.thread_groups[entry.tg_id]
        tg.deactivated = True
        if host:
            host.thread_groups.remove(entry.tg_id)
            for m in host.members:
                tile = self.tiles[m]
                self._advance_window(tile, entry.tg_id, now)
                tile.hosted_groups.discard(entry.tg_id)
                tile.windows.pop(entry.tg_id, None)
            if not host.thread_groups:
                self._dissolve_group(host)
            else:
                self._rebase_group(host)
        if self.tg_active.get(entry.tg_id, True):
            self.tg_active[entry.tg_id] = False
            self.trace.emit(now, "sim", "tg-active", tg=entry.tg_id, active=False)
        self.trace.emit(now, "supervisor", "tg-deactivated",
                        tg=entry.tg_id, loss_of_capability=entry.loss_of_capability)

    def _dissolve_group(self, group: TileGroup):
        self._cancel_timer(group.group_id)
        self.ctxs.pop(group.group_id, None)
        for m in group.members:
            tile = self.tiles[m]
            if group.group_id in tile.groups:
                tile.groups.remove(group.group_id)
        self.groups.pop(group.group_id, None)
        self.group_order.remove(group.group_id)

    def migrate_thread_group(self, entry: crit.PlanEntry, host: Optional[TileGroup],
                             request: crit.AllocRequest):
        """Move one thread group onto its planned tiles as a fresh tile
        group, seeding state from a healthy donor (or restarting from init)."""
        now = self.queue.now
        tg = self.thread_groups[entry.tg_id]
        donor_id = next((m for m in request.current_tiles
                         if self.tiles[m].status in (ACTIVE, SUSPECT)), None)

        if host is not None:
            host.thread_groups.remove(entry.tg_id)
            for m in host.members:
                tile = self.tiles[m]
                self._advance_window(tile, entry.tg_id, now)
                tile.hosted_groups.discard(entry.tg_id)
                tile.windows.pop(entry.tg_id, None)
            if not host.thread_groups:
                self._dissolve_group(host)
            else:
                self._rebase_group(host)

        self._stage3_seq += 1
        gid = f"{entry.tg_id}-m{self._stage3_seq}"
        base = request.period
        group = TileGroup(
            group_id=gid,
            members=list(entry.tiles),
            thread_groups=[entry.tg_id],
            base_period=base,
            comparison_deadline=max(1, base // 10),
            grace_period=2 * sum(s.update_cost for s in tg.threads),
            period_factor=entry.period_factor,
            correction_enabled=len(entry.tiles) >= 3,
        )
        for spec in tg.threads:
            tg.check_divisor[spec.thread_id] = max(1, spec.checkpoint_period // base)
        self.groups[gid] = group
        self.group_order.append(gid)

        if donor_id is None:
            self.trace.emit(now, "supervisor", "tg-restarted",
                            tg=entry.tg_id, reason="no-donor")
        donor = self.tiles[donor_id] if donor_id else None
        for m in entry.tiles:
            tile = self.tiles[m]
            if tile.status == IDLE_SPARE:
                if m in self.supervisor.spare_pool:
                    self.supervisor.spare_pool.remove(m)
                tile.set_status(UPDATING)
                tile.set_status(ACTIVE)
            elif tile.status in (SUSPECT, UPDATING):
                self.pending_updates.pop(m, None)
                tile.set_status(ACTIVE)
            tile.groups.append(gid)
            tile.hosted_groups.add(entry.tg_id)
            win = RunWindow()
            win.resume(now)
            tile.windows[entry.tg_id] = win
            for spec in tg.threads:
                if donor is not None and m != donor_id:
                    snap = workload.sync_callback(donor.threads[spec.thread_id])
                    ts = workload.update_callback(tile.threads[spec.thread_id], snap)
                    ts.corrupted = donor.threads[spec.thread_id].corrupted
                    tile.threads[spec.thread_id] = ts
                elif donor is None:
                    tile.threads[spec.thread_id] = workload.init_thread(spec, m)
            self.trace.emit(now, m, "timer-adjusted",
                            tile=m, group=gid, period=group.period)
        self.trace.emit(now, "supervisor", "tg-migrated",
                        tg=entry.tg_id, group=gid, tiles=list(entry.tiles),
                        mode=entry.mode, period_factor=entry.period_factor)
        if entry.mode == crit.MODE_DETECT_ONLY:
            self.trace.emit(now, "supervisor", "tg-degraded",
                            tg=entry.tg_id, mode=entry.mode, levers=list(entry.levers))
        if not tg.deactivated and not self.tg_active.get(entry.tg_id, False):
            self.tg_active[entry.tg_id] = True
            self.trace.emit(now, "sim", "tg-active", tg=entry.tg_id, active=True)
        self.timers[gid] = self.queue.schedule(now, "timer-checkpoint", {"group_id": gid})

    def _rebase_group(self, group: TileGroup):
        """Recompute a group's period after its thread set changed."""
        periods = [
            s.checkpoint_period
            for tg_id in group.thread_groups
            for s in self.thread_groups[tg_id].threads
        ]
        new_base = min(periods)
        if new_base == group.base_period:
            return
        group.base_period = new_base
        group.comparison_deadline = max(1, new_base // 10)
        for tg_id in group.thread_groups:
            tg = self.thread_groups[tg_id]
            for spec in tg.threads:
                tg.check_divisor[spec.thread_id] = max(1, spec.checkpoint_period // new_base)
        for m in group.members:
            self.trace.emit(self.queue.now, m, "timer-adjusted",
                            tile=m, group=group.group_id, period=group.period)

    # ------------------------------------------------------------------
    # spare restoration

    def _restore_groups(self):
        """When a spare appears, top up the first group running short."""
        now = self.queue.now
        for gid in self.group_order:
            group = self.groups[gid]
            if not group.correction_enabled:
                continue
            if group.target_size - len(group.members) <= 0:
                continue
            spare_id = self.supervisor.take_spare()
            if spare_id is None:
                return
            spare = self.tiles[spare_id]
            self.trace.emit(now, "supervisor", "group-restored", group=gid, tile=spare_id)
            self._activate_spare(spare_id, group, donor=None)
            group.members.append(spare_id)
            ctx = self.ctxs.get(gid)
            if ctx is None or ctx.completed:
                self.start_checkpoint(group, trigger="supervisor")
            return

    # ------------------------------------------------------------------
    # availability + timers

    def _set_tg_active(self, group: TileGroup, active: bool, now: int):
        for tg_id in group.thread_groups:
            if self.thread_groups[tg_id].deactivated:
                continue
            if self.tg_active.get(tg_id) != active:
                self.tg_active[tg_id] = active
                self.trace.emit(now, "sim", "tg-active", tg=tg_id, active=active)

    def _arm_timer(self, group: TileGroup, at: int):
        self._cancel_timer(group.group_id)
        self.timers[group.group_id] = self.queue.schedule(
            at, "timer-checkpoint", {"group_id": group.group_id})

    def _cancel_timer(self, group_id: str):
        handle = self.timers.pop(group_id, None)
        if handle is not None:
            handle.cancel()
