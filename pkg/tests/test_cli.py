import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from levikernel import cli_orchestrator as cli
from levikernel.cli_orchestrator import (ConfigError, MissingArtifactError, Pipeline,
                                         export_plots_data, load_config, main)

SMALL = """\
name: small
kernel:
  preset: constant-matrix
  a: 3.141592653589793
  alpha: 1.0
grid:
  n: 128
  h: 0.19634954084936207
  dt: 0.03125
  steps: 16
checks: [conservativeness, two-sided, chapman-kolmogorov]
mc:
  enabled: true
  n_paths: 4000
  n_steps: 128
  exit_paths: 2000
seed: 5
"""


@pytest.fixture(autouse=True)
def _cache(monkeypatch, field_cache):
    monkeypatch.setenv(cli.CACHE_ENV, field_cache)


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def baseline(tmp_path_factory, field_cache):
    import os
    os.environ[cli.CACHE_ENV] = field_cache
    out = tmp_path_factory.mktemp("baseline")
    code = main(["run", "--config", "cauchy-baseline", "--out", str(out)])
    return code, out


def test_alpha_out_of_range_rejected(tmp_path, capsys):
    path = _write(tmp_path, "name: bad\nkernel:\n  preset: constant\n  alpha: 2.5\n")
    assert main(["validate", "--config", path, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "alpha out of (0,2)" in err and "kernel.alpha" in err and "line 4" in err
    assert not (tmp_path / "o").exists()


def test_yaml_syntax_error_has_line(tmp_path, capsys):
    path = _write(tmp_path, "name: x\nkernel: {preset: constant\nseed: 1\n")
    assert main(["build-kernel", "--config", path]) == 2
    assert "line" in capsys.readouterr().err


@pytest.mark.parametrize("text, fld, line", [
    ("name: x\nbogus: 1\n", "bogus", 2),
    ("seed: 1\ngrid:\n  n: 1\n", "grid.n", 3),
    ("checks: [holder, nonsense]\n", "checks", 1),
    ("kernel:\n  preset: tanh-matrix\n  alpha: 1.0\nmc:\n  enabled: true\n  budget: 10\n",
     "mc.budget", 6),
    ("mc:\n  enabled: true\n", "mc.enabled", 2),
    ("kernel:\n  preset: tanh-matrix\n  alpha: 1.0\nmc:\n  enabled: true\n  n_steps: 8\n",
     "mc.n_steps", 6),
    ("preset: nope\n", "preset", 1),
])
def test_config_diagnostics(tmp_path, text, fld, line):
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, text))
    assert exc.value.field == fld and exc.value.line == line


def test_config_hash_and_defaults(tmp_path):
    a = load_config("cauchy-baseline")
    b = load_config("cauchy-baseline", {"out": str(tmp_path)})
    assert a.hash == b.hash
    assert load_config("cauchy-baseline", {"seed": 3}).hash != a.hash
    d = a.as_dict()
    assert set(cli.DEFAULTS) <= set(d) and d["grid"]["n"] == 512


def test_cauchy_baseline_passes(baseline):
    code, out = baseline
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]
    checks = report["sections"]["checks"]["checks"] + report["sections"]["compare"]["checks"]
    assert all(c["pass"] for c in checks)
    assert {c["check_id"] for c in checks} >= {"pde-residual", "mc-vs-parametrix",
                                               "negative-control", "levy-system", "exit-time"}
    h = report["config_hash"]
    for name in ("checks", "compare", "certificate", "simulate"):
        assert json.loads((out / f"{name}.json").read_text())["config_hash"] == h
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == h and man["config"]["mc"]["n_paths"] == 20000
    assert all(s["status"] == "complete" for s in man["stages"].values())
    assert "Overall: pass" in (out / "summary.md").read_text()


def test_resume_rebuilds_only_report(baseline, tmp_path):
    _, out = baseline
    work = tmp_path / "copy"
    shutil.copytree(out, work)
    cfg = load_config("cauchy-baseline", {"out": str(work)})
    pipe = Pipeline(cfg, resume=True)
    assert pipe.run() == 0 and pipe.ran == []
    before = (work / "report.json").read_bytes()
    (work / "report.json").unlink()
    pipe = Pipeline(cfg, resume=True)
    assert pipe.run() == 0 and pipe.ran == ["report"]
    assert (work / "report.json").read_bytes() == before
    # a new seed invalidates the Monte Carlo stages but not the field
    cfg2 = load_config("cauchy-baseline", {"out": str(work), "seed": 1})
    pipe = Pipeline(cfg2, resume=True)
    pipe.run(("simulate", "compare"))
    assert pipe.ran == ["simulate", "compare"]


def test_exports(baseline):
    _, out = baseline
    plots = out / "plots"

    def read(name):
        with open(plots / name) as fh:
            rows = list(csv.reader(fh))
        return rows[0], np.array(rows[1:], dtype=float)

    head, data = read("kernel_slices.csv")
    assert head == ["offset", "p_t=0.125", "p_t=0.25", "p_t=0.5"]
    off, p = data[:, 0], data[:, 3]
    for side in (off >= 0, off <= 0):
        o, v = np.abs(off[side]), p[side]
        order = np.argsort(o)
        assert np.all(np.diff(v[order]) <= 1e-15)
    head, data = read("bound_ratio.csv")
    assert head == ["t", "min_ratio", "max_ratio"]
    assert np.all(data[:, 1] <= data[:, 2]) and np.all(data[:, 1] > 0)
    head, data = read("qn_decay.csv")
    assert head == ["n", "sup_q_n", "envelope_ratio", "majorant"]
    head, data = read("mc_overlay.csv")
    assert head == ["y", "empirical", "lower", "upper", "parametrix"]
    assert np.all(data[:, 2] <= data[:, 1] + 1e-12) and np.all(data[:, 1] <= data[:, 3] + 1e-12)


def test_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifactError):
        export_plots_data({"stages": {}}, tmp_path)
    pipe = Pipeline(load_config("cauchy-baseline", {"out": str(tmp_path)}))
    with pytest.raises(MissingArtifactError):
        pipe.field()


def test_reports_identical_across_threads(tmp_path):
    path = _write(tmp_path, SMALL)
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["run", "--config", path, "--out", str(out), "--threads", threads]) == 0
        outs.append(out)
    for name in ("report.json", "checks.json", "compare.json", "summary.md"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    a = np.load(outs[0] / "ensemble.npz")["states"]
    assert np.array_equal(a, np.load(outs[1] / "ensemble.npz")["states"])


def test_stage_failure_keeps_partial_manifest(tmp_path, monkeypatch, capsys):
    path = _write(tmp_path, SMALL)
    out = tmp_path / "o"

    def boom(self):
        raise RuntimeError("injected")

    monkeypatch.setattr(Pipeline, "_stage_validate", boom)
    assert main(["validate", "--config", path, "--out", str(out)]) == 3
    assert "stage validate failed" in capsys.readouterr().err
    man = json.loads((out / "manifest.json").read_text())
    assert man["stages"]["build"]["status"] == "complete"
    assert man["stages"]["validate"]["status"] == "failed"


def test_verify_lemma21_command(tmp_path, capsys):
    out = tmp_path / "lem"
    assert main(["verify-lemma21", "--alpha", "0.5", "--alpha", "1.5", "--out", str(out)]) == 0
    recs = json.loads((out / "lemma21.json").read_text())["records"]
    alphas = {r["parameters"]["alpha"] for r in recs if r["inequality-id"] == "rho-integral"}
    assert alphas == {0.5, 1.5} and len(recs) == 32 and all(r["pass"] for r in recs)
    assert "PASS" in capsys.readouterr().out


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "levikernel.cli_orchestrator", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("build-kernel", "validate", "simulate", "compare", "report", "verify-lemma21"):
        assert sub in r.stdout
    r = subprocess.run([sys.executable, "-m", "levikernel.cli_orchestrator", "validate", "--help"],
                       capture_output=True, text=True)
    for flag in ("--config", "--out", "--resume", "--seed", "--threads"):
        assert flag in r.stdout
