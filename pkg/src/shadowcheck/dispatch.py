"""Workload distribution: point records, partitioning, and the wire protocol.

Backtrack points share one line-oriented record format on disk and on the
wire, so the store file doubles as a shippable workload. After the first
iteration the master partitions the discovered points round-robin across
nodes (deepest first); each node then explores its share, plus whatever
it discovers along the way, to exhaustion. Points never migrate after
assignment.

Worker protocol over any reliable byte stream, one message per line:

    worker -> master:  HELLO <node_id>
    master -> worker:  WORKLOAD <count>   followed by <count> point records
    worker -> master:  DONE              followed by one JSON report line
    master -> worker:  BYE
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import IO

from .errors import DispatchError
from .model import (
    BacktrackPoint,
    ObjectId,
    RaceDetail,
    Trace,
    ViolationKind,
    ViolationReport,
)


# -- point records ---------------------------------------------------------------


def _encode_csv(values) -> str:
    return ",".join(str(int(v)) for v in values)


def _decode_csv(text: str) -> list[int]:
    if text == "":
        return []
    return [int(part) for part in text.split(",")]


def encode_point(point: BacktrackPoint) -> str:
    return (
        f"depth={point.depth}"
        f" iter={point.discovery_iteration}"
        f" done={_encode_csv(sorted(point.done))}"
        f" pending={_encode_csv(sorted(point.pending))}"
        f" prefix={_encode_csv(point.prefix)}"
    )


def decode_point(line: str) -> BacktrackPoint:
    fields: dict[str, str] = {}
    for part in line.strip().split(" "):
        if "=" not in part:
            raise DispatchError(f"malformed point record field {part!r}")
        name, value = part.split("=", 1)
        fields[name] = value
    try:
        point = BacktrackPoint(
            depth=int(fields["depth"]),
            prefix=tuple(_decode_csv(fields["prefix"])),
            pending=set(_decode_csv(fields["pending"])),
            done=set(_decode_csv(fields["done"])),
            discovery_iteration=int(fields["iter"]),
        )
    except KeyError as missing:
        raise DispatchError(f"point record missing field {missing}") from None
    point.validate()
    return point


# -- partitioning -------------------------------------------------------------------


@dataclass
class Workload:
    node_id: int
    points: list[BacktrackPoint] = field(default_factory=list)


class NodeState(Enum):
    WORKING = "working"
    DONE = "done"


@dataclass
class NodeStatus:
    node_id: int
    state: NodeState = NodeState.WORKING
    violations_so_far: int = 0


def partition(points: list[BacktrackPoint], n: int) -> list[Workload]:
    """Round-robin the points (already deepest-first) over ``n`` nodes."""
    if n < 1:
        raise ValueError(f"need at least one node, got {n}")
    workloads = [Workload(node_id=i + 1) for i in range(n)]
    for i, point in enumerate(points):
        workloads[i % n].points.append(point)
    return workloads


# -- report serialization --------------------------------------------------------------


def encode_report(report) -> str:
    payload = {
        "node_id": report.node_id,
        "iterations_run": report.iterations_run,
        "bound_warnings": report.bound_warnings,
        "points_explored": report.points_explored,
        "violations": [
            {
                "kind": v.kind.value,
                "iteration": v.iteration,
                "steps": list(v.trace.steps),
                "trace_file": v.trace_file,
                "race": (
                    None
                    if v.race_detail is None
                    else {
                        "object": int(v.race_detail.object),
                        "readers": v.race_detail.readers_pending,
                        "writers": v.race_detail.writers_pending,
                    }
                ),
            }
            for v in report.violations
        ],
    }
    return json.dumps(payload)


def decode_report(text: str):
    from .explorer import ExplorationReport

    payload = json.loads(text)
    report = ExplorationReport(
        iterations_run=payload["iterations_run"],
        bound_warnings=payload["bound_warnings"],
        points_explored=payload["points_explored"],
        node_id=payload["node_id"],
    )
    for entry in payload["violations"]:
        race = entry["race"]
        report.violations.append(
            ViolationReport(
                kind=ViolationKind(entry["kind"]),
                iteration=entry["iteration"],
                trace=Trace(steps=list(entry["steps"]), iteration=entry["iteration"]),
                race_detail=(
                    None
                    if race is None
                    else RaceDetail(
                        object=ObjectId(race["object"]),
                        readers_pending=race["readers"],
                        writers_pending=race["writers"],
                    )
                ),
                trace_file=entry["trace_file"],
            )
        )
    return report


# -- the protocol, both sides -------------------------------------------------------------


def _read_line(stream: IO[str], context: str) -> str:
    line = stream.readline()
    if line == "":
        raise DispatchError(f"connection closed while waiting for {context}")
    return line.rstrip("\n")


def serve_worker(rfile: IO[str], wfile: IO[str], program, config) -> None:
    """Run the worker side: announce, receive a workload, explore, report."""
    from .explorer import Explorer

    wfile.write(f"HELLO {config.node_id}\n")
    wfile.flush()
    header = _read_line(rfile, "WORKLOAD header")
    if not header.startswith("WORKLOAD "):
        raise DispatchError(f"expected WORKLOAD, got {header!r}")
    count = int(header.split(" ", 1)[1])
    points = [decode_point(_read_line(rfile, "point record")) for _ in range(count)]

    explorer = Explorer(program, config)
    report = explorer.explore(seed_points=points)

    wfile.write("DONE\n")
    wfile.write(encode_report(report) + "\n")
    wfile.flush()
    _read_line(rfile, "BYE")


def send_workload(rfile: IO[str], wfile: IO[str], workload: Workload):
    """Run the master side of one worker link; returns the worker's report."""
    hello = _read_line(rfile, "HELLO")
    if not hello.startswith("HELLO "):
        raise DispatchError(f"expected HELLO, got {hello!r}")
    wfile.write(f"WORKLOAD {len(workload.points)}\n")
    for point in workload.points:
        wfile.write(encode_point(point) + "\n")
    wfile.flush()
    done = _read_line(rfile, "DONE")
    if done != "DONE":
        raise DispatchError(f"expected DONE, got {done!r}")
    report = decode_report(_read_line(rfile, "report"))
    wfile.write("BYE\n")
    wfile.flush()
    return report


receive_workload = serve_worker  # alias: the same exchange, seen from the receiving side


# -- distributed check runs -------------------------------------------------------------


def check_distributed(program, config):
    """Explore with ``config.node_count`` nodes and merge the reports.

    A single node explores directly. With more, the master runs iteration
    0, partitions the discovered points, and each worker (an in-process
    explorer behind the real wire protocol over a socketpair) drains its
    share independently.
    """
    from dataclasses import replace

    from .explorer import Explorer, explore

    if config.node_count <= 1:
        return explore(program, config)

    master = Explorer(program, replace(config, node_id=0))
    points = master.explore_initial()
    workloads = partition(points, config.node_count)

    statuses = [NodeStatus(node_id=w.node_id) for w in workloads]
    worker_reports = []
    for workload, status in zip(workloads, statuses):
        worker_config = replace(config, node_id=workload.node_id)
        report = _run_worker_over_socketpair(program, worker_config, workload)
        status.state = NodeState.DONE
        status.violations_so_far = len(report.violations)
        worker_reports.append(report)

    return _merge_reports(master, worker_reports)


def _run_worker_over_socketpair(program, config, workload: Workload):
    left, right = socket.socketpair()
    worker_err: list[BaseException] = []

    def worker_side() -> None:
        with right.makefile("r") as rfile, right.makefile("w") as wfile:
            try:
                serve_worker(rfile, wfile, program, config)
            except BaseException as exc:
                worker_err.append(exc)

    thread = threading.Thread(target=worker_side, name=f"worker-{config.node_id}", daemon=True)
    thread.start()
    try:
        with left.makefile("r") as rfile, left.makefile("w") as wfile:
            report = send_workload(rfile, wfile, workload)
    finally:
        thread.join(timeout=120)
        left.close()
        right.close()
    if worker_err:
        raise DispatchError(f"worker {config.node_id} failed") from worker_err[0]
    return report


def check_remote(program, config, addresses: list[str]):
    """Like ``check_distributed`` but over TCP links to already-running workers."""
    from dataclasses import replace

    from .explorer import Explorer

    master = Explorer(program, replace(config, node_id=0))
    points = master.explore_initial()
    workloads = partition(points, len(addresses))

    worker_reports = []
    for address, workload in zip(addresses, workloads):
        host, _, port = address.rpartition(":")
        try:
            conn = socket.create_connection((host or "127.0.0.1", int(port)))
        except OSError as exc:
            raise DispatchError(f"cannot reach worker at {address}") from exc
        with conn, conn.makefile("r") as rfile, conn.makefile("w") as wfile:
            worker_reports.append(send_workload(rfile, wfile, workload))

    return _merge_reports(master, worker_reports)


def _merge_reports(master, worker_reports):
    worker_reports = sorted(worker_reports, key=lambda r: r.node_id)
    merged = master.report
    for report in worker_reports:
        merged.iterations_run += report.iterations_run
        merged.bound_warnings += report.bound_warnings
        merged.points_explored += report.points_explored
        merged.violations.extend(report.violations)
    master.sink.violations = list(merged.violations)
    master.sink.write_report()
    return merged
