import csv
import json
import runpy
from importlib.resources import files
from pathlib import Path

import pytest

from neckflow import cli, io

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    make = runpy.run_path(str(ROOT / "scripts" / "make_fixtures.py"))["make_fixtures"]
    return make(tmp_path_factory.mktemp("fixtures"), level=2, n_heights=21)


def scenario(name):
    return str(files("neckflow").joinpath("scenarios", f"{name}.json"))


def test_run_sphere_writes_artifacts(tmp_path, capsys):
    assert cli.main(["run", scenario("sphere"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert [c["label"] for c in report["components"]] == ["Sphere"]
    assert report["surgeries"] == [] and report["scenario"] == "sphere"
    events = [json.loads(line) for line in (tmp_path / "events.jsonl").read_text().splitlines()]
    assert [e["type"] for e in events] == ["Extinction"]
    with open(tmp_path / "series.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.SERIES_COLUMNS
    t = [float(r[0]) for r in rows[1:]]
    assert t == sorted(t) and len(t) > 2
    assert "components ['Sphere']" in capsys.readouterr().out


def test_malformed_scenario(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"profile": {"kind": "sphere"}, "flow": {"bogus": 1}}))
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_certify_verdicts(fixtures, tmp_path):
    out = tmp_path / "cert.json"
    assert cli.main(["certify", str(fixtures["good"]), "--out", str(out)]) == 0
    assert io.certificate_from_dict(io.read_json(out)).passed
    assert cli.main(["certify", str(fixtures["volume_ablated"]), "--out", str(out)]) == 1
    assert io.certificate_from_dict(io.read_json(out)).failing() == ["volume"]
    # a loose tolerance on the failing condition turns the verdict around
    assert cli.main(["certify", str(fixtures["volume_ablated"]), "--out", str(out),
                     "--tol-volume", "1.0"]) == 0


def test_truncated_neck_file(fixtures, tmp_path):
    text = Path(fixtures["good"]).read_text()
    cut = tmp_path / "cut.json"
    cut.write_text(text[: len(text) // 2])
    assert cli.main(["certify", str(cut)]) == 2


def test_merge(fixtures, tmp_path):
    args = ["merge", str(fixtures["left"]), str(fixtures["right_flipped"]), "--delta", "0.2",
            "--out", str(tmp_path)]
    assert cli.main(args) == 0
    merged = io.load_neck(tmp_path / "merged_neck.json")
    assert merged.length == pytest.approx(3.0, abs=1e-5)
    iso = io.read_json(tmp_path / "isometries.json")
    assert iso["F2"]["z_flip"] is True
    assert cli.main(["merge", str(fixtures["left"]), str(fixtures["disjoint"]),
                     "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("flags, label", [([], "TubeS1"), (["--reflect"], "TwistedQuotient")])
def test_extend_periodic(fixtures, tmp_path, capsys, flags, label):
    assert cli.main(["extend", str(fixtures["periodic_profile"]), "--out", str(tmp_path)]
                    + flags) == 0
    res = io.maximal_from_dict(io.read_json(tmp_path / "maximal.json"))
    assert res.kind == "Periodic"
    assert capsys.readouterr().out.strip().endswith(label)


def test_extend_open_profile(fixtures, tmp_path):
    assert cli.main(["extend", str(fixtures["waist_profile"]), "--out", str(tmp_path)]) == 0
    assert io.read_json(tmp_path / "maximal.json")["kind"] == "Finite"


def test_sweep(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NECKFLOW_THREADS", "2")
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    code = cli.main(["sweep", scenario("sphere"), str(bad), "--out", str(tmp_path / "sw")])
    assert code == 2
    assert (tmp_path / "sw" / "sphere" / "report.json").exists()
    assert "ok" in capsys.readouterr().out


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("NECKFLOW_THREADS", "3")
    assert cli.thread_cap(10) == 3 and cli.thread_cap(2) == 2
    monkeypatch.setenv("NECKFLOW_THREADS", "many")
    assert cli.main(["sweep", scenario("sphere")]) == 2


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["certify"], ["merge", "a"],
                                  ["certify", "x.json", "--tol-cmc", "abc"]])
def test_usage_errors(argv):
    assert cli.main(argv) == 2


def test_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == 0
    assert "certify" in capsys.readouterr().out
