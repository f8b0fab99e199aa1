import socket
import threading

from shadowcheck.cli import run
from shadowcheck.tracer import parse_trace


def test_estimate_bound_prints_the_sum(capsys):
    assert run(["estimate-bound", "4", "3", "3"]) == 0
    assert capsys.readouterr().out.strip() == "10"


def test_estimate_bound_rejects_bad_counts(capsys):
    assert run(["estimate-bound", "4", "0"]) == 2


def test_list_programs_names_the_corpus(capsys):
    assert run(["list-programs"]) == 0
    out = capsys.readouterr().out
    for name in ("deadlock-two-mutexes", "data-race-flag", "livelock-philosophers"):
        assert name in out


def test_unknown_program_exits_usage_and_lists_alternatives(capsys):
    code = run(["check", "--program", "nope", "--out", "/tmp/unused"])
    assert code == 2
    err = capsys.readouterr().err
    assert "deadlock-two-mutexes" in err


def test_check_deadlock_corpus(tmp_path, capsys):
    code = run(["check", "--program", "deadlock-two-mutexes", "--out", str(tmp_path)])
    assert code == 1
    assert list((tmp_path / "traces").glob("bt_*_deadlock"))
    assert (tmp_path / "report.txt").exists()
    assert "deadlock" in capsys.readouterr().out


def test_check_clean_program_exits_zero(tmp_path):
    assert run(["check", "--program", "two-writes-independent", "--out", str(tmp_path)]) == 0


def test_replay_reproduces_the_race(tmp_path, capsys):
    assert run(["check", "--program", "data-race-flag", "--out", str(tmp_path)]) == 1
    capsys.readouterr()
    trace = next((tmp_path / "traces").glob("data_race*"))
    code = run(["replay", "--program", "data-race-flag", "--trace", str(trace)])
    assert code == 1
    out = capsys.readouterr().out
    assert "outcome=data-race" in out
    assert "{n,0,dc,dc}" in out  # the visible-op log is printed


def test_report_is_deterministic_modulo_timestamp(tmp_path):
    for sub in ("a", "b"):
        assert (
            run(["check", "--program", "deadlock-two-mutexes", "--out", str(tmp_path / sub)])
            == 1
        )
    read = lambda sub: (tmp_path / sub / "report.txt").read_text().splitlines()[1:]
    assert read("a") == read("b")


def test_check_with_in_process_nodes(tmp_path):
    code = run(
        ["check", "--program", "deadlock-two-mutexes", "--out", str(tmp_path), "--nodes", "2"]
    )
    assert code == 1


def test_check_no_dpor_finds_the_deadlock_too(tmp_path):
    assert (
        run(["check", "--program", "deadlock-two-mutexes", "--out", str(tmp_path), "--no-dpor"])
        == 1
    )


def test_check_against_a_tcp_worker(tmp_path):
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]

    def worker():
        from shadowcheck import dispatch
        from shadowcheck.corpus import get_program
        from shadowcheck.explorer import ExplorationConfig

        conn, _ = server.accept()
        with conn, conn.makefile("r") as r, conn.makefile("w") as w:
            dispatch.serve_worker(
                r,
                w,
                get_program("deadlock-two-mutexes"),
                ExplorationConfig(out_dir=tmp_path / "worker", node_id=1),
            )

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    code = run(
        [
            "check",
            "--program",
            "deadlock-two-mutexes",
            "--out",
            str(tmp_path / "master"),
            "--workers",
            f"127.0.0.1:{port}",
        ]
    )
    thread.join(timeout=60)
    server.close()
    assert code == 1


def test_seed_trace_flag(tmp_path):
    seed = tmp_path / "seed"
    seed.write_text("1 0.\n2 0.\n")
    code = run(
        [
            "check",
            "--program",
            "two-writes-independent",
            "--out",
            str(tmp_path),
            "--seed-trace",
            str(seed),
        ]
    )
    assert code == 0


def test_keep_all_traces_flag(tmp_path):
    run(
        [
            "check",
            "--program",
            "two-writes-independent",
            "--out",
            str(tmp_path),
            "--keep-all-traces",
        ]
    )
    kept = list((tmp_path / "traces").glob("trace_*"))
    assert kept
    parse_trace(kept[0])  # well-formed
