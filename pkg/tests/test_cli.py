from __future__ import annotations

import json
import subprocess
import sys

import pytest

from ddendgame.cli import (
    EXIT_FORMAT,
    EXIT_MISMATCH,
    EXIT_MISSING,
    EXIT_OK,
    BuildSpec,
    main,
    plan,
)
from ddendgame.core import Seat, Trump
from ddendgame.setdb import MANIFEST, read_manifest

FIRST_EIGHT = "N:98... E:54... S:76... W:32... leader=E trump=NT"


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    root = tmp_path_factory.mktemp("db")
    assert main(["--db", str(root), "build", "--cards", "8", "--engine", "both", "--workers", "1"]) == EXIT_OK
    return root


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_plan_includes_priors():
    levels = plan(BuildSpec(cards=8, leaders=(Seat.E,), trumps=(Trump.NT,)))
    assert [len(x) for x in levels] == [4, 1]


def test_build_spec_checks():
    with pytest.raises(ValueError):
        BuildSpec(cards=16)
    with pytest.raises(ValueError):
        BuildSpec(cards=6)


def test_build_writes_files_and_manifest(built):
    sgdb = sorted(built.glob("setdb/**/*.sgdb"))
    rdb = sorted(built.glob("retro/**/*.rdb"))
    assert len(sgdb) == len(rdb) == 5
    d8 = built / "setdb" / "8" / "NT" / "E"
    rows = read_manifest(d8)
    assert (d8 / MANIFEST).exists() and len(rows) == 1
    (row,) = rows.values()
    assert 15 <= row.entries <= 23


def test_query_known_deals(built, capsys):
    code, out, _ = run(capsys, "--db", str(built), "query", FIRST_EIGHT)
    assert code == EXIT_OK and out.strip() == "2"
    code, out, _ = run(capsys, "--db", str(built), "--json", "query", "N:4... E:3... S:5... W:2...", "--leader", "E", "--trump", "NT")
    assert code == EXIT_OK and json.loads(out)["value"] == 1


def test_query_errors(built, capsys):
    code, _, err = run(capsys, "--db", str(built), "query", "N:98... E:54... S:76... W:32...", "--leader", "N", "--trump", "NT")
    assert code == EXIT_MISSING and "build" in err
    code, _, err = run(capsys, "--db", str(built), "query", "N:9 E:5")
    assert code == EXIT_FORMAT


def test_validate_exhaustive_and_sampled(built, capsys):
    code, out, _ = run(capsys, "--db", str(built), "--json", "validate", "--exhaustive")
    report = json.loads(out)
    assert code == EXIT_OK
    assert report["mismatches"] == 0 and report["states_checked"] == 4 * 24 + 2520
    code, out, _ = run(capsys, "--db", str(built), "--json", "validate", "--against", "minimax", "--samples", "50", "--seed", "3")
    assert code == EXIT_OK and json.loads(out)["states_checked"] == 250


def test_zero_samples_warns(built, capsys):
    code, _, err = run(capsys, "--db", str(built), "validate", "--samples", "0")
    assert code == EXIT_OK and "warning" in err


def test_stats(built, capsys):
    code, out, _ = run(capsys, "--db", str(built), "--json", "stats")
    rows = json.loads(out)
    assert code == EXIT_OK
    assert [r["cards"] for r in rows] == [4, 8]
    assert rows[1]["states_covered"] == 2520
    assert rows[0]["states_per_byte"] == pytest.approx(96 / (8 * rows[0]["nodes"]))


def test_rebuild_is_idempotent(built, capsys):
    before = {p: p.read_bytes() for p in built.glob("setdb/**/*.sgdb")}
    code, out, _ = run(capsys, "--db", str(built), "--json", "build", "--cards", "8", "--workers", "1")
    assert code == EXIT_OK and json.loads(out)["built"] == 0
    assert {p: p.read_bytes() for p in built.glob("setdb/**/*.sgdb")} == before


def test_builds_are_deterministic(built, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DDENDGAME_DB", str(tmp_path))
    code, _, _ = run(capsys, "build", "--cards", "8", "--workers", "1")
    assert code == EXIT_OK
    for path in built.glob("setdb/**/*.sgdb"):
        assert (tmp_path / path.relative_to(built)).read_bytes() == path.read_bytes()


def test_parallel_build_matches(built, tmp_path, capsys):
    code, _, _ = run(capsys, "--db", str(tmp_path), "build", "--cards", "8", "--workers", "2")
    assert code == EXIT_OK
    for path in built.glob("setdb/**/*.sgdb"):
        assert (tmp_path / path.relative_to(built)).read_bytes() == path.read_bytes()


def test_corrupt_file_and_mismatch_exit_codes(built, tmp_path, capsys):
    import shutil

    copy = tmp_path / "db"
    shutil.copytree(built, copy)
    target = next((copy / "setdb" / "8").glob("**/*.sgdb"))
    # flip a stored value: swap the retro answer file for a wrong one
    rdb = next((copy / "retro" / "8").glob("**/*.rdb"))
    data = bytearray(rdb.read_bytes())
    data[-1] ^= 0x11
    rdb.write_bytes(bytes(data))
    code, out, _ = run(capsys, "--db", str(copy), "validate", "--exhaustive")
    assert code == EXIT_MISMATCH and "mismatches" in out
    target.write_bytes(b"JUNK" + target.read_bytes()[4:])
    code, _, err = run(capsys, "--db", str(copy), "validate", "--exhaustive")
    assert code == EXIT_FORMAT and "magic" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ddendgame", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "build" in res.stdout
