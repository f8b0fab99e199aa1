"""The exploration controller and its backtrack-point store.

Iteration 0 runs free. Every later iteration takes the deepest stored
backtrack point, replays its schedule prefix, forces one still-unexplored
thread at the branch state, and continues free to an outcome. Points are
keyed by (schedule prefix, depth): the checker is stateless and never
captures program state, so the prefix *is* the state's name. A key
remembers the threads already taken from it for the whole run, which is
what guarantees no branch is explored twice and the store provably
empties for bounded programs.

Backtrack candidates arrive from three places while an iteration runs:
states whose enabled pending operations still conflict after discarding
the pairwise-independent ones; the classic look-back rule relating each
executed step to the latest earlier dependent step of another thread;
and race reports, which abort the iteration before the racing accesses
execute and therefore bank the overlap-avoiding schedules themselves.
With reduction disabled, every state with two or more enabled threads
branches, which enumerates all schedules.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import dispatch as _codec
from .dpor import ExecutedStep, ExecutionLog, dependent_subset, is_backtrack_point, on_execute
from .errors import ProtocolError
from .model import AccessKind, BacktrackPoint, ViolationReport, VisibleOp
from .runtime import IterationResult, IterationRunner, SchedulePlan
from .scheduler import IterationOutcome, estimate_bound
from .shadow import ProgramHandle
from .tracer import TraceSink, parse_trace

DEFAULT_BOUND_FALLBACK = 1000
BOUND_HEADROOM = 10  # default bound = estimated steps x headroom

Key = tuple[tuple[int, ...], int]


@dataclass
class ExplorationConfig:
    out_dir: str | Path
    bound: int | None = None
    dpor_enabled: bool = True
    race_enabled: bool = True
    strict_races: bool = False
    keep_all_traces: bool = False
    node_count: int = 1
    seed_trace: str | Path | None = None
    node_id: int = 0
    record_state_hashes: bool = False

    def resolved_bound(self, program: ProgramHandle) -> int:
        if self.bound is not None:
            return self.bound
        if program.declared_partitions:
            return estimate_bound(program.declared_partitions) * BOUND_HEADROOM
        return DEFAULT_BOUND_FALLBACK


@dataclass
class ExplorationReport:
    iterations_run: int = 0
    violations: list[ViolationReport] = field(default_factory=list)
    bound_warnings: int = 0
    points_explored: int = 0
    node_id: int = 0
    unfair_prunes: int = 0  # branches abandoned as unreachable under fair scheduling


class _Record:
    """Store entry: the live point plus the branches already taken."""

    __slots__ = ("depth", "prefix", "pending", "done", "discovery_iteration")

    def __init__(self, prefix: tuple[int, ...], depth: int, discovery_iteration: int) -> None:
        self.prefix = prefix
        self.depth = depth
        self.pending: set[int] = set()
        self.done: set[int] = set()
        self.discovery_iteration = discovery_iteration


def _prefix_digest(prefix: tuple[int, ...]) -> str:
    return hashlib.sha1(",".join(map(str, prefix)).encode()).hexdigest()


class BacktrackStore:
    """All backtrack points of one node, active and exhausted alike.

    Exhausted keys are kept (with empty pending sets) so a branch can
    never be resurrected once taken.
    """

    def __init__(self, path: Path | None = None) -> None:
        self._records: dict[Key, _Record] = {}
        self._path = path

    # -- growing ------------------------------------------------------------

    def absorb_state(
        self,
        prefix: tuple[int, ...],
        depth: int,
        candidates: set[int],
        scheduled: int,
        iteration: int,
    ) -> None:
        """A state's enabled ops still conflict; bank the untaken ones."""
        rec = self._record(prefix, depth, iteration)
        rec.done.add(scheduled)
        rec.pending.discard(scheduled)
        for tid in candidates:
            if tid not in rec.done:
                rec.pending.add(tid)

    def absorb_addition(
        self,
        prefix: tuple[int, ...],
        depth: int,
        tid: int,
        executed: int,
        iteration: int,
    ) -> None:
        """Classic look-back addition: re-run ``tid`` from this state."""
        rec = self._record(prefix, depth, iteration)
        rec.done.add(executed)
        if tid not in rec.done:
            rec.pending.add(tid)

    def _record(self, prefix: tuple[int, ...], depth: int, iteration: int) -> _Record:
        key = (prefix, depth)
        rec = self._records.get(key)
        if rec is None:
            rec = _Record(prefix, depth, iteration)
            self._records[key] = rec
        return rec

    # -- shrinking -----------------------------------------------------------

    def select_point(self) -> BacktrackPoint | None:
        """Deepest point; ties go to the latest-discovered one."""
        live = [r for r in self._records.values() if r.pending]
        if not live:
            return None
        best = max(
            live,
            key=lambda r: (r.depth, r.discovery_iteration, _prefix_digest(r.prefix)),
        )
        return BacktrackPoint(
            depth=best.depth,
            prefix=best.prefix,
            pending=set(best.pending),
            done=set(best.done),
            discovery_iteration=best.discovery_iteration,
        )

    def take_branch(self, point: BacktrackPoint, live_ops: dict[int, VisibleOp]) -> int:
        """Extract the lowest-id pending thread and re-evaluate the rest.

        The remainder survives only while it still contains two mutually
        dependent operations; a remainder that no longer branches is
        dropped (its conflicts, if real, resurface through the look-back
        rule when they execute).
        """
        rec = self._records[(point.prefix, point.depth)]
        if not rec.pending:
            raise ProtocolError("branch taken on an exhausted point")
        chosen = min(rec.pending)
        rec.pending.discard(chosen)
        rec.done.add(chosen)
        if rec.pending:
            remaining = {t: live_ops[t] for t in rec.pending if t in live_ops}
            if len(remaining) < len(rec.pending) or not is_backtrack_point(remaining):
                rec.pending.clear()
        return chosen

    # -- persistence ----------------------------------------------------------

    def live_points(self) -> list[BacktrackPoint]:
        pts = [
            BacktrackPoint(
                depth=r.depth,
                prefix=r.prefix,
                pending=set(r.pending),
                done=set(r.done),
                discovery_iteration=r.discovery_iteration,
            )
            for r in self._records.values()
            if r.pending
        ]
        pts.sort(key=lambda p: (-p.depth, p.discovery_iteration, _prefix_digest(p.prefix)))
        return pts

    def seed(self, points: list[BacktrackPoint]) -> None:
        for p in points:
            rec = self._record(p.prefix, p.depth, p.discovery_iteration)
            rec.done |= p.done
            rec.pending |= p.pending - rec.done

    def flush(self) -> None:
        if self._path is None:
            return
        lines = [_codec.encode_point(p) for p in self.live_points()]
        self._path.write_text("".join(line + "\n" for line in lines))

    def load(self) -> None:
        if self._path is None or not self._path.exists():
            return
        points = [
            _codec.decode_point(line)
            for line in self._path.read_text().splitlines()
            if line.strip()
        ]
        self.seed(points)


class Explorer:
    """Drives iterations for one node until its store is empty."""

    def __init__(
        self,
        program: ProgramHandle,
        config: ExplorationConfig,
        *,
        iteration_callback: Callable[[IterationResult], None] | None = None,
    ) -> None:
        self.program = program
        self.config = config
        self.bound = config.resolved_bound(program)
        out_dir = Path(config.out_dir)
        prefix = f"node{config.node_id}_" if config.node_id else ""
        self.sink = TraceSink(
            out_dir, keep_all_traces=config.keep_all_traces, file_prefix=prefix
        )
        self.store = BacktrackStore(out_dir / f"btstore.node{config.node_id}")
        self.iteration_callback = iteration_callback
        self._seen_traces: set[tuple[int, ...]] = set()
        self.report = ExplorationReport(node_id=config.node_id)

    # -- public entry points --------------------------------------------------

    def explore(self, seed_points: list[BacktrackPoint] | None = None) -> ExplorationReport:
        """Run to exhaustion: iteration 0 free (or from seeds), then branches."""
        iteration = 0
        if seed_points is None:
            plan = SchedulePlan()
            if self.config.seed_trace is not None:
                plan.replay = parse_trace(self.config.seed_trace).steps
            self._run_iteration(iteration, plan)
        else:
            self.store.seed(seed_points)

        while True:
            point = self.store.select_point()
            if point is None:
                break
            iteration += 1
            chosen_box: list[int] = []

            def pick_branch(live_ops: dict[int, VisibleOp]) -> int:
                tid = self.store.take_branch(point, live_ops)
                chosen_box.append(tid)
                self.report.points_explored += 1
                return tid

            plan = SchedulePlan(replay=list(point.prefix), pick_branch=pick_branch)
            self._run_iteration(iteration, plan)
            self.store.flush()

        self.sink.write_report()
        self.store.flush()
        self.report.violations = list(self.sink.violations)
        return self.report

    def explore_initial(self) -> list[BacktrackPoint]:
        """Run only iteration 0 and hand back the points it discovered.

        Used by the dispatcher: the master runs the first iteration, then
        distributes the store instead of draining it itself.
        """
        plan = SchedulePlan()
        if self.config.seed_trace is not None:
            plan.replay = parse_trace(self.config.seed_trace).steps
        self._run_iteration(0, plan)
        self.store.flush()
        self.report.violations = list(self.sink.violations)
        return self.store.live_points()

    # -- one iteration -----------------------------------------------------------

    def _run_iteration(self, iteration: int, plan: SchedulePlan) -> IterationResult:
        # Points are buffered during the run and banked only if the
        # iteration completed within the depth bound: an execution the
        # bound cut off sits at the exploration horizon, so its branch
        # points describe schedules the bound would cut off again.
        pending_absorbs: list[tuple] = []
        runner = IterationRunner(
            self.program,
            iteration=iteration,
            bound=self.bound,
            plan=plan,
            race_enabled=self.config.race_enabled,
            strict_races=self.config.strict_races,
            step_hook=self._step_hook(iteration, pending_absorbs),
            record_state_hashes=self.config.record_state_hashes,
            unfair_prune=True,
        )
        result = runner.run()
        self.report.iterations_run += 1

        if result.outcome is IterationOutcome.UNFAIR_STOP:
            # Not a program behavior: the branch forced a schedule the fair
            # scheduler can never produce. Nothing is banked or reported.
            self.report.unfair_prunes += 1
            self.sink.drop_iteration(iteration)
            return result

        signature = tuple(result.trace.steps)
        if signature in self._seen_traces:
            raise ProtocolError(
                f"iteration {iteration} repeated an already-explored schedule"
            )
        self._seen_traces.add(signature)

        if result.outcome not in (
            IterationOutcome.LIVELOCK_CANDIDATE,
            IterationOutcome.BOUND_WARNING,
        ):
            for kind, args in pending_absorbs:
                if kind == "state":
                    self.store.absorb_state(*args)
                else:
                    self.store.absorb_addition(*args)
        if result.outcome is IterationOutcome.DATA_RACE:
            self._absorb_race_dodges(result, iteration)

        if result.outcome is IterationOutcome.BOUND_WARNING:
            self.report.bound_warnings += 1
        self.sink.close_iteration(result)
        if self.config.keep_all_traces:
            log_path = self.sink.trace_dir / f"{self.sink.file_prefix}decisions_{iteration}.log"
            log_path.write_text(
                "".join(d.debug_line() + "\n" for d in result.decisions)
            )
        if self.iteration_callback is not None:
            self.iteration_callback(result)
        return result

    def _absorb_race_dodges(self, result, iteration: int) -> None:
        """Bank the schedules on which the reported race does not occur.

        A race is an overlap of two pending accesses, detected the moment
        the later one is announced; it never comes to executing either.
        The overlap is avoided exactly by the schedules that retire the
        earlier-announced access before the later racer's announcement,
        so the earlier racer is owed a branch at every state in between.
        Announcements are pinned to schedule depths, which makes those
        states addressable as (prefix, depth) keys like any other point.
        """
        if not self.config.dpor_enabled:
            # Exhaustive mode branches on every multi-enabled state anyway.
            return
        steps = result.trace.steps
        enabled = result.enabled_snapshots
        readers = [(t, d) for t, d, kind in result.race_racers if kind is AccessKind.READ]
        writers = [(t, d) for t, d, kind in result.race_racers if kind is AccessKind.WRITE]
        pairs = [(r, w) for r in readers for w in writers]
        if not pairs:  # strict-mode overlap of writers only
            pairs = [(a, b) for a in writers for b in writers if a != b]

        def bank(depth: int, tid: int) -> None:
            if tid in enabled[depth]:
                self.store.absorb_addition(
                    tuple(steps[:depth]), depth, tid, steps[depth], iteration
                )

        for a, b in pairs:
            early, late = (a, b) if a[1] <= b[1] else (b, a)
            if early[1] == late[1]:
                continue  # announced together; no schedule separates them
            # Retire the early access before the late racer is announced...
            for depth in range(early[1] + 1, late[1] + 1):
                bank(depth, early[0])
            # ...advance the late racer's thread past its access before the
            # early one is announced (chasing the announcement earlier)...
            for depth in range(1, early[1] + 1):
                bank(depth, late[0])
            # ...or hold the early announcement back: let anything else
            # enabled run ahead of the step that created it.
            for tid in enabled[early[1]]:
                if tid != steps[early[1]]:
                    bank(early[1], tid)

    def _step_hook(self, iteration: int, sink: list[tuple]):
        dpor_on = self.config.dpor_enabled

        def hook(
            log: ExecutionLog,
            step: ExecutedStep,
            pre_ops: dict[int, VisibleOp],
            enabled: frozenset,
            mode: str,
        ) -> None:
            self.sink.record_step(iteration, int(step.op.tid))
            if mode == "replay":
                return  # the prefix was mined when it was first executed
            depth = step.depth
            prefix = tuple(int(s.op.tid) for s in log.steps[:depth])
            scheduled = int(step.op.tid)
            enabled_ops = {tid: pre_ops[tid] for tid in enabled}

            if dpor_on:
                candidates = dependent_subset(enabled_ops)
            elif len(enabled_ops) >= 2:
                candidates = set(enabled_ops)
            else:
                candidates = set()
            if scheduled in candidates:
                sink.append(("state", (prefix, depth, candidates, scheduled, iteration)))

            if dpor_on:
                for j, tid in on_execute(log, step):
                    executed = int(log.steps[j].op.tid)
                    sink.append(("addition", (prefix[:j], j, tid, executed, iteration)))

        return hook


def explore(
    program: ProgramHandle,
    config: ExplorationConfig,
    *,
    iteration_callback: Callable[[IterationResult], None] | None = None,
) -> ExplorationReport:
    return Explorer(program, config, iteration_callback=iteration_callback).explore()
