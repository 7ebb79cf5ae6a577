import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from r2se import cli
from r2se import harness as h
from r2se.config import RunConfig
from r2se.errors import ConfigError, InputError, IntegrityError
from r2se.metrics import read_eval_csv, summarize

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    run = h.load_run(SMOKE, None, tmp_path_factory.mktemp("smoke"))
    h.run_pipeline(run)
    return run


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="policy.'nosuch'"):
        RunConfig.from_dict({"policy": {"nosuch": 1}})
    with pytest.raises(ConfigError, match="extra"):
        RunConfig.from_dict({"extra": {}})
    with pytest.raises(ConfigError, match="merge"):
        RunConfig.from_dict({"world": {"kinds": ["merge"]}})
    with pytest.raises(ConfigError, match="expand.sigma"):
        RunConfig.from_dict({"expand": {"sigma": 1.5}})
    with pytest.raises(ConfigError, match="is_clamp"):
        RunConfig.from_dict({"refine": {"is_clamp": [1.1, 2.0]}})
    assert RunConfig.from_dict({}).to_dict() == RunConfig().to_dict()


def test_derived_seeds_are_stable():
    a, b = h.derive_seeds(0), h.derive_seeds(0)
    assert a == b and len(set(a.values())) == len(a)
    assert h.derive_seeds(1) != a


def test_gen_data_deterministic(tmp_path):
    cfg = RunConfig.load(SMOKE)
    e1 = h.cmd_gen_data(h.Run(cfg, tmp_path / "a"))
    e2 = h.cmd_gen_data(h.Run(cfg, tmp_path / "b"))
    assert e1 == e2
    for split, n in (("train", cfg.world.n_train), ("test", cfg.world.n_test)):
        assert sum(e1["counts"][split].values()) == n
    assert (tmp_path / "a" / "logs" / "gen-data.log").read_text().startswith("INFO")


def test_pipeline_artifacts_chain(smoke_run):
    m = smoke_run.manifest()
    assert set(m["artifacts"]) == set(h.COMMANDS)
    a = m["artifacts"]
    assert a["pretrain"]["dataset_id"] == a["gen-data"]["id"]
    assert a["allocate"]["generalist_id"] == a["pretrain"]["id"]
    assert a["refine"]["base_id"] == a["pretrain"]["id"] and a["refine"]["hard_set_id"] == a["allocate"]["id"]
    assert a["fit-gate"]["ensemble_id"] == a["refine"]["id"]
    assert a["eval"]["gate_id"] == a["fit-gate"]["id"]
    for cmd in h.COMMANDS:
        assert (smoke_run.out / "logs" / f"{cmd}.log").exists()


def test_eval_and_ablation_consistency(smoke_run):
    base = read_eval_csv(smoke_run.out / "eval" / "generalist.csv")
    gated = read_eval_csv(smoke_run.out / "eval" / "gated.csv")
    assert [r["clip_id"] for r in base] == [r["clip_id"] for r in gated]
    table = {r["row_id"]: r for r in h.read_ablation_csv(smoke_run.out / "ablation.csv")}
    assert list(table) == ["ID1", "ID2", "ID3", "ID4", "ID0", "FT"]
    assert abs(table["ID1"]["pdms"] - summarize(base)["mean_pdms"]) < 1e-12 and table["ID1"]["fr"] == 0
    assert abs(table["ID0"]["pdms"] - summarize(gated)["mean_pdms"]) < 1e-12
    summary = json.loads((smoke_run.out / "eval" / "summary.json").read_text())
    assert 0 <= summary["hard"]["remaining_hard"] <= 1
    report = json.loads((smoke_run.out / "report.json").read_text())
    assert report["runs"][0]["generalist"]["fr"] == 0
    assert "## Ablation" in (smoke_run.out / "report.md").read_text()


def test_sigma_one_reproduces_generalist_csv(smoke_run, tmp_path):
    copy = h.Run(smoke_run.cfg, tmp_path / "run")
    shutil.copytree(smoke_run.out, copy.out)
    h.cmd_eval(copy, sigma=1.0)
    assert (copy.out / "eval" / "gated.csv").read_bytes() == (copy.out / "eval" / "generalist.csv").read_bytes()


def _copy(smoke_run, tmp_path):
    run = h.Run(smoke_run.cfg, tmp_path / "run")
    shutil.copytree(smoke_run.out, run.out)
    return run


def test_tampered_data_is_rejected(smoke_run, tmp_path):
    run = _copy(smoke_run, tmp_path)
    path = run.out / "data" / "train.jsonl"
    path.write_text(path.read_text() + "\n")
    with pytest.raises(IntegrityError, match="differs from manifest"):
        h.cmd_pretrain(run)


def test_mismatched_chain_is_rejected(smoke_run, tmp_path):
    run = _copy(smoke_run, tmp_path)
    doc = json.loads((run.out / "hard_set.json").read_text())
    doc["hard_set"]["generalist_id"] = "0" * 16
    (run.out / "hard_set.json").write_text(json.dumps(doc))
    with pytest.raises(IntegrityError, match="0000000000000000"):
        h.cmd_refine(run)
    gate = json.loads((run.out / "gate.json").read_text())
    run2 = _copy(smoke_run, tmp_path / "b")
    gate["ensemble_id"] = "f" * 16
    (run2.out / "gate.json").write_text(json.dumps(gate))
    with pytest.raises(IntegrityError, match="ffffffff"):
        h.cmd_eval(run2)


def test_seed_mismatch_and_missing_step(smoke_run, tmp_path):
    cfg = RunConfig.load(SMOKE)
    cfg.seed = 7
    with pytest.raises(IntegrityError, match="master seed"):
        h.Run(cfg, smoke_run.out).manifest()
    with pytest.raises(InputError, match="gen-data"):
        h.cmd_pretrain(h.Run(RunConfig.load(SMOKE), tmp_path / "empty"))


def test_cli(tmp_path, capsys):
    out = tmp_path / "cli"
    assert cli.main(["gen-data", "--config", str(SMOKE), "--out", str(out), "--seed", "3"]) == 0
    entry = json.loads(capsys.readouterr().out)
    assert entry["id"] == json.loads((out / "manifest.json").read_text())["artifacts"]["gen-data"]["id"]
    assert cli.main(["allocate", "--config", str(SMOKE), "--out", str(tmp_path / "x")]) == 2
    assert "pretrain" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"policy": {"lr": "fast"}}')
    assert cli.main(["gen-data", "--config", str(bad), "--out", str(out)]) == 2
    assert "policy.lr" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["train", "--config", str(SMOKE)])


def test_runs_are_identical_across_directories(smoke_run, tmp_path):
    other = h.load_run(SMOKE, None, tmp_path / "elsewhere")
    h.run_pipeline(other)
    files = sorted(f.relative_to(smoke_run.out) for f in smoke_run.out.rglob("*") if f.is_file())
    assert files == sorted(f.relative_to(other.out) for f in other.out.rglob("*") if f.is_file())
    assert [str(f) for f in files if (smoke_run.out / f).read_bytes() != (other.out / f).read_bytes()] == []
