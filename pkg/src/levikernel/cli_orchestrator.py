"""Command line pipeline: build -> validate -> simulate -> compare -> report.

Every stage writes its artifacts into the output directory and records a
hash of the inputs it depended on in ``manifest.json``; ``--resume`` skips
stages whose hash matches and whose artifacts are all present.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import mc_sim, rho_calculus, validator
from .frozen_kernel import SpaceTimeGrid
from .jump_kernel import (constant_matrix_field, kernel_from_config, tanh_matrix_field)
from .parametrix import KernelField, SeriesCertificate, build_field
from .rho_calculus import RhoProfile, rho

log = logging.getLogger("levikernel")

THREADS_ENV = "LEVIKERNEL_THREADS"
CACHE_ENV = "LEVIKERNEL_CACHE"

STAGES = ("build", "validate", "simulate", "compare", "lemma21", "report")
DEPENDS = {
    "build": (),
    "validate": ("build",),
    "simulate": (),
    "compare": ("build", "simulate"),
    "lemma21": (),
    "report": ("build", "validate", "simulate", "compare", "lemma21"),
}

DEFAULT_CHECKS = ("chapman-kolmogorov", "conservativeness", "fractional-derivative", "generator",
                  "gradient", "holder", "initial-continuity", "joint-continuity",
                  "maximum-principle", "pde-residual", "smoothing", "two-sided")

DEFAULTS = {
    "name": "run",
    "kernel": {"preset": "constant", "value": 1.0, "alpha": 1.0},
    "grid": SpaceTimeGrid().as_dict(),
    "rel_tol": 1e-6,
    "n_max": 12,
    "checks": list(DEFAULT_CHECKS),
    "check_options": {},
    "mc": {"enabled": False, "n_paths": 100000, "n_steps": 64, "t": 0.5, "budget": 5e8,
           "negative_alpha": 1.5, "source": [0.0, 1.0], "target": [4.0, 5.0],
           "exit_factors": [1, 2, 4, 8], "exit_paths": 20000},
    "lemma21": {"enabled": False, "alphas": [1.0]},
    "seed": 0,
    "out": "levikernel-out",
}

PRESETS = {
    "cauchy-baseline": {
        "name": "cauchy-baseline",
        # kappa = a / pi for the matrix a, so a = pi gives kappa == 1
        "kernel": {"preset": "constant-matrix", "a": math.pi, "alpha": 1.0},
        "checks": list(DEFAULT_CHECKS) + ["kappa-continuity"],
        "mc": {"enabled": True, "n_paths": 20000, "n_steps": 128, "exit_paths": 10000},
    },
    "reference": {
        "name": "reference",
        "kernel": {"preset": "reference", "alpha": 1.0, "beta": 0.5, "amplitude": 0.4},
        "checks": [c for c in DEFAULT_CHECKS if c != "generator"] + ["kappa-continuity"],
        "lemma21": {"enabled": True},
    },
    "tanh-mc": {
        "name": "tanh-mc",
        "kernel": {"preset": "tanh-matrix", "amplitude": 0.3, "alpha": 1.0},
        "checks": ["conservativeness", "two-sided"],
        "mc": {"enabled": True},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        loc = ""
        if field:
            loc += f"field '{field}'"
        if line:
            loc += f" (line {line})"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.field, self.line = field, line


class StageError(RuntimeError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# configuration

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "kernel":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)


def _sha(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


@dataclass
class RunConfig:
    """Fully defaulted run description; ``hash`` identifies it."""

    data: dict
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self) -> str:
        return _sha({k: v for k, v in self.data.items() if k != "out"})

    def as_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def grid(self) -> SpaceTimeGrid:
        return SpaceTimeGrid.from_dict(self.data["grid"])

    def kernel(self):
        return kernel_from_config(self.data["kernel"])

    def matrix_field(self):
        kc = self.data["kernel"]
        d = int(kc.get("dimension", kc.get("d", 1)))
        if kc.get("preset") == "tanh-matrix":
            return tanh_matrix_field(float(kc.get("amplitude", 0.3)), d)
        if kc.get("preset") == "constant-matrix":
            return constant_matrix_field(kc.get("a", 1.0), d)
        return None

    @classmethod
    def from_dict(cls, raw: dict, lines: Optional[dict] = None) -> "RunConfig":
        lines = lines or {}
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a mapping")
        unknown = set(raw) - set(DEFAULTS) - {"preset"}
        if unknown:
            u = sorted(unknown)[0]
            raise ConfigError("unknown key", u, lines.get(u))
        base = DEFAULTS
        if "preset" in raw:
            if raw["preset"] not in PRESETS:
                raise ConfigError(f"unknown preset {raw['preset']!r}", "preset",
                                  lines.get("preset"))
            base = _merge(DEFAULTS, PRESETS[raw["preset"]])
        data = _merge(base, {k: v for k, v in raw.items() if k != "preset"})
        cfg = cls(data, lines)
        cfg.validate()
        return cfg

    def _fail(self, msg, key):
        raise ConfigError(msg, key, self.lines.get(key))

    def validate(self) -> None:
        d = self.data
        kc = d["kernel"]
        if not isinstance(kc, dict):
            self._fail("must be a mapping", "kernel")
        try:
            alpha = float(kc.get("alpha", 1.0))
        except (TypeError, ValueError):
            self._fail("alpha must be a number", "kernel.alpha")
        if not (0.0 < alpha < 2.0):
            self._fail(f"alpha out of (0,2): {alpha}", "kernel.alpha")
        try:
            self.kernel()
        except ValueError as exc:
            self._fail(str(exc), "kernel")
        g = d["grid"]
        for key in ("n", "steps"):
            if not isinstance(g.get(key), int) or g[key] < 2:
                self._fail("must be an integer >= 2", f"grid.{key}")
        for key in ("h", "dt"):
            if not isinstance(g.get(key), (int, float)) or g[key] <= 0:
                self._fail("must be positive", f"grid.{key}")
        if not (0 < float(d["rel_tol"]) < 1):
            self._fail("must lie in (0,1)", "rel_tol")
        bad = [c for c in d["checks"]
               if c not in validator.CHECKS and c != "kappa-continuity"]
        if bad:
            self._fail(f"unknown check {bad[0]!r}", "checks")
        mc = d["mc"]
        if mc["enabled"]:
            if self.matrix_field() is None:
                self._fail("simulation needs a matrix-induced kernel", "mc.enabled")
            if mc["n_paths"] * mc["n_steps"] > mc["budget"]:
                self._fail("n_paths * n_steps exceeds budget", "mc.budget")
            (s0, s1), (t0, t1) = mc["source"], mc["target"]
            gap = t0 - s1 if t0 > s1 else s0 - t1
            if gap <= 0:
                self._fail("source and target must be disjoint", "mc.target")
            a = float(kc.get("alpha", 1.0))
            reach = (self.matrix_field().lambda1 * 2.0 * (mc["t"] / mc["n_steps"]) ** (1 / a)
                     * mc_sim.StableSampler(a).quantile_abs(0.99))
            if reach >= gap:
                self._fail(f"jump threshold {reach:.3g} exceeds the source-target gap {gap:g}",
                           "mc.n_steps")
            steps = round(mc["t"] / self.grid.dt)
            if abs(steps * self.grid.dt - mc["t"]) > 1e-12 or not 1 <= steps <= g["steps"]:
                self._fail("t must be a grid time", "mc.t")
        if not isinstance(d["seed"], int):
            self._fail("must be an integer", "seed")


def _line_map(text: str) -> dict:
    """Dotted key -> 1-based line number of its value in the YAML source."""
    out = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for kn, vn in node.value:
                key = f"{prefix}{kn.value}"
                out[key] = kn.start_mark.line + 1
                walk(vn, key + ".")

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


def load_config(source: Optional[str], overrides: Optional[dict] = None) -> RunConfig:
    """Parse a YAML file, or take a preset name, and apply overrides."""
    raw, lines = {}, {}
    if source:
        if source in PRESETS:
            raw = {"preset": source}
        else:
            path = Path(source)
            if not path.exists():
                raise ConfigError(f"no such config file or preset: {source}")
            text = path.read_text()
            try:
                raw = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}",
                                  line=mark.line + 1 if mark else None) from None
            lines = _line_map(text)
    raw = _merge(raw, overrides or {})
    return RunConfig.from_dict(raw, lines)


# ---------------------------------------------------------------------------
# pipeline

def _dump(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1, default=float) + "\n")
    os.replace(tmp, path)


def _report_json(r) -> dict:
    out = r.as_json()
    out.pop("runtime", None)
    return out


class Pipeline:
    """Runs stages with hash bookkeeping in ``out/manifest.json``."""

    def __init__(self, cfg: RunConfig, out=None, threads: Optional[int] = None,
                 resume: bool = False):
        self.cfg = cfg
        self.out = Path(out or cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.threads = threads or int(os.environ.get(THREADS_ENV, "1"))
        self.resume = resume
        self.mpath = self.out / "manifest.json"
        old = json.loads(self.mpath.read_text()) if self.mpath.exists() else {}
        self.manifest = {"config": cfg.as_dict(), "config_hash": cfg.hash,
                         "stages": old.get("stages", {}) if resume else {}}
        self.timings = {}
        self.ran = []
        self.order = []
        self._field = self._kernel = None

    # -- bookkeeping
    def stage_hash(self, name: str) -> str:
        d = self.cfg.data
        parts = {"stage": name}
        if name == "build":
            parts.update(kernel=d["kernel"], grid=d["grid"], rel_tol=d["rel_tol"],
                         n_max=d["n_max"], coarse="pde-residual" in d["checks"])
        elif name == "validate":
            parts.update(checks=d["checks"], options=d["check_options"])
        elif name in ("simulate", "compare"):
            parts.update(kernel=d["kernel"], mc=d["mc"], seed=d["seed"])
        elif name == "lemma21":
            parts.update(lemma21=d["lemma21"])
        elif name == "report":
            parts.update(config=self.cfg.hash)
        for dep in DEPENDS[name]:
            parts[dep] = self.stage_hash(dep)
        return _sha(parts)

    def _done(self, name: str) -> bool:
        st = self.manifest["stages"].get(name)
        return (st is not None and st.get("status") == "complete"
                and st.get("hash") == self.stage_hash(name)
                and all((self.out / a).exists() for a in st.get("artifacts", [])))

    def _save_manifest(self) -> None:
        _dump(self.mpath, self.manifest)

    def run(self, stages=STAGES) -> int:
        order = []

        def add(s):
            for dep in DEPENDS[s]:
                add(dep)
            if s not in order:
                order.append(s)

        for s in stages:
            add(s)
        self.order = order
        for s in STAGES:
            if s not in order:
                continue
            if self.resume and self._done(s):
                log.info("stage %s up to date", s)
                continue
            t0 = time.perf_counter()
            try:
                info = getattr(self, f"_stage_{s}")()
            except Exception as exc:
                self.manifest["stages"][s] = {"hash": self.stage_hash(s), "status": "failed",
                                              "error": f"{type(exc).__name__}: {exc}"}
                self._save_manifest()
                raise StageError(f"stage {s} failed: {exc}") from exc
            info.update(hash=self.stage_hash(s), status="complete")
            self.manifest["stages"][s] = info
            self.timings[s] = time.perf_counter() - t0
            self.ran.append(s)
            self._save_manifest()
        return 0 if self.all_passed(order) else 1

    def all_passed(self, stages) -> bool:
        return all(self.manifest["stages"].get(s, {}).get("passed", True) for s in stages)

    # -- shared objects
    @property
    def kernel(self):
        if self._kernel is None:
            self._kernel = self.cfg.kernel()
        return self._kernel

    def field(self, name="field.npz") -> KernelField:
        p = self.out / name
        if not p.exists():
            raise MissingArtifactError(str(p))
        if name != "field.npz":
            return KernelField.load(p)
        if self._field is None:
            self._field = KernelField.load(p)
        return self._field

    def _build(self, grid):
        return build_field(self.kernel, grid, float(self.cfg["rel_tol"]), int(self.cfg["n_max"]),
                           cache_dir=os.environ.get(CACHE_ENV))

    # -- stages
    def _stage_build(self) -> dict:
        fld, cert = self._build(self.cfg.grid)
        fld.provenance["run_config_hash"] = self.cfg.hash
        fld.save(self.out / "field.npz")
        self._field = fld
        arts = ["field.npz", "certificate.json"]
        cd = cert.as_dict() if cert is not None else {}
        _dump(self.out / "certificate.json", {"config_hash": self.cfg.hash, "certificate": cd})
        if "pde-residual" in self.cfg["checks"]:
            coarse, _ = self._build(self.cfg.grid.coarsened())
            coarse.provenance["run_config_hash"] = self.cfg.hash
            coarse.save(self.out / "field-coarse.npz")
            arts.append("field-coarse.npz")
        return {"artifacts": arts, "N": cd.get("N"), "clipped": fld.provenance.get("clipped", 0)}

    def _stage_validate(self) -> dict:
        fld, k = self.field(), self.kernel
        names = [c for c in self.cfg["checks"] if c in validator.CHECKS]
        opts = copy.deepcopy(self.cfg["check_options"])
        if "pde-residual" in names:
            opts.setdefault("pde-residual", {})["coarse"] = self.field("field-coarse.npz")
        reports = validator.run_checks(fld, k, names, opts)
        if "kappa-continuity" in self.cfg["checks"]:
            reports.append(validator.check_kappa_continuity(
                k, grid=self.cfg.grid, **self.cfg["check_options"].get("kappa-continuity", {})))
        for r in reports:
            log.info(r.line())
        _dump(self.out / "checks.json", {"config_hash": self.cfg.hash,
                                         "checks": [_report_json(r) for r in reports]})
        self.timings.update({f"check:{r.check_id}": r.runtime for r in reports})
        return {"artifacts": ["checks.json"], "passed": all(r.passed for r in reports),
                "failed": [r.check_id for r in reports if not r.passed]}

    def _mc_x0(self):
        g = self.cfg.grid
        return float(g.x[g.n // 2])

    def _stage_simulate(self) -> dict:
        mc = self.cfg["mc"]
        if not mc["enabled"]:
            _dump(self.out / "simulate.json", {"skipped": True})
            return {"artifacts": ["simulate.json"], "skipped": True}
        A = self.cfg.matrix_field()
        alpha = self.kernel.alpha
        seed = int(self.cfg["seed"])
        args = (A, self._mc_x0(), mc["t"], mc["n_steps"], mc["n_paths"])
        ens = mc_sim.simulate_sde(*args, seed, alpha, mc["budget"], self.threads)
        ens.save(self.out / "ensemble.npz")
        neg = mc_sim.simulate_sde(*args, seed + 1, mc["negative_alpha"], mc["budget"],
                                  self.threads)
        neg.save(self.out / "ensemble-negative.npz")
        _dump(self.out / "simulate.json", {"config_hash": self.cfg.hash, "seed": seed,
                                           "kernel_hash": ens.kernel_hash,
                                           "jumps": int(ens.jumps["path"].size)})
        return {"artifacts": ["ensemble.npz", "ensemble-negative.npz", "simulate.json"]}

    def _stage_compare(self) -> dict:
        mc = self.cfg["mc"]
        if not mc["enabled"]:
            _dump(self.out / "compare.json", {"skipped": True})
            return {"artifacts": ["compare.json"], "skipped": True}
        fld, k = self.field(), self.kernel
        ens = mc_sim.PathEnsemble.load(self.out / "ensemble.npz")
        neg = mc_sim.PathEnsemble.load(self.out / "ensemble-negative.npz")
        seed = int(self.cfg["seed"])
        main = mc_sim.compare_with_parametrix(fld, ens, mc["t"], seed=seed)
        ctrl = mc_sim.compare_with_parametrix(fld, neg, mc["t"], seed=seed, require_match=False)
        ctrl_rep = validator.CheckReport(
            "negative-control", dict(ctrl.parameters), ctrl.measured, ctrl.tolerance,
            not ctrl.passed, details=dict(ctrl.details, comparison_passed=ctrl.passed))
        c4 = validator.check_two_sided_bounds(fld, k).details["c4_lower"]
        reports = [
            main, ctrl_rep,
            mc_sim.estimate_jump_intensity(ens, k, tuple(mc["source"]), tuple(mc["target"]),
                                           seed=seed),
            mc_sim.exit_probabilities(tuple(mc["exit_factors"]), alpha=k.alpha,
                                      n_paths=mc["exit_paths"], seed=seed + 2),
            mc_sim.lower_bound_signature(ens, mc["t"], c4),
        ]
        for r in reports:
            log.info(r.line())
        _dump(self.out / "compare.json", {"config_hash": self.cfg.hash,
                                          "checks": [_report_json(r) for r in reports]})
        return {"artifacts": ["compare.json"], "passed": all(r.passed for r in reports),
                "failed": [r.check_id for r in reports if not r.passed]}

    def _stage_lemma21(self) -> dict:
        lc = self.cfg["lemma21"]
        if not lc["enabled"]:
            _dump(self.out / "lemma21.json", {"skipped": True})
            return {"artifacts": ["lemma21.json"], "skipped": True}
        recs = []
        for a in lc["alphas"]:
            recs.extend(rho_calculus.run_lemma21_suite(float(a)))
        out = []
        for r in recs:
            j = r.as_json()
            j.pop("runtime", None)
            out.append(j)
        _dump(self.out / "lemma21.json", {"config_hash": self.cfg.hash, "records": out})
        return {"artifacts": ["lemma21.json"], "passed": all(r.passed for r in recs)}

    def _stage_report(self) -> dict:
        conf = self.cfg.as_dict()
        conf.pop("out")  # reports of equal configs are byte-identical wherever they live
        report = {"config": conf, "config_hash": self.cfg.hash, "sections": {}}
        for name in ("certificate", "checks", "simulate", "compare", "lemma21"):
            p = self.out / f"{name}.json"
            if p.exists():
                report["sections"][name] = json.loads(p.read_text())
        report["passed"] = self.all_passed(("validate", "compare", "lemma21"))
        _dump(self.out / "report.json", report)
        (self.out / "summary.md").write_text(render_summary(report))
        files = export_plots_data(self.manifest, self.out)
        _dump(self.out / "timings.json", self.timings)
        return {"artifacts": ["report.json", "summary.md"] + files}


def render_summary(report: dict) -> str:
    lines = [f"# Run {report['config']['name']}", "",
             f"config hash `{report['config_hash'][:16]}`", ""]
    cert = report["sections"].get("certificate", {}).get("certificate")
    if cert:
        lines += [f"Series truncated at N = {cert['N']} (tail bound {cert['tail_bound']:.3g}).", ""]
    lines += ["| check | measured | tolerance | result |", "|---|---|---|---|"]
    for sec in ("checks", "compare"):
        for r in report["sections"].get(sec, {}).get("checks", []):
            lines.append(f"| {r['check_id']} | {r['measured']:.4g} | {r['tolerance']:.4g} | "
                         f"{'pass' if r['pass'] else 'FAIL'} |")
    for r in report["sections"].get("lemma21", {}).get("records", []):
        lines.append(f"| {r['inequality-id']} | {r['measured_constant']:.4g} | "
                     f"{r['ceiling']:.4g} | {'pass' if r['pass'] else 'FAIL'} |")
    lines += ["", f"Overall: {'pass' if report['passed'] else 'FAIL'}", ""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# plot data

def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])


def export_plots_data(manifest: dict, out) -> list:
    """Write plot-ready CSV files into ``out/plots``; returns their relative paths.

    Files: kernel slices from the centre node, per-t min and max of p / rho^0_alpha,
    q_n decay with the fitted majorant and, when an ensemble exists, the
    histogram / parametrix overlay.
    """
    out = Path(out)
    stages = manifest.get("stages", {})
    if "build" not in stages or not (out / "field.npz").exists():
        raise MissingArtifactError("kernel field missing; run build-kernel first")
    fld = KernelField.load(out / "field.npz")
    cfg = RunConfig.from_dict(manifest["config"])
    k = cfg.kernel()
    g = fld.grid
    pdir = out / "plots"
    pdir.mkdir(exist_ok=True)
    i0 = g.n // 2
    times = [t for t in (1 / 8, 1 / 4, 1 / 2) if t <= g.t[-1] + 1e-12]
    files = []

    rows = [[float(g.x[j] - g.x[i0])] + [float(fld.at(t)[i0, j]) for t in times]
            for j in range(g.n)]
    _write_csv(pdir / "kernel_slices.csv", ["offset"] + [f"p_t={t:g}" for t in times], rows)
    files.append("plots/kernel_slices.csv")

    a = k.alpha
    sel = np.flatnonzero(np.abs(g.x) <= 0.5 * g.x[-1])
    rows = []
    for kk, t in enumerate(g.t):
        w = g.x[sel][:, None] - g.x[sel][None, :]
        r = fld.values[kk][np.ix_(sel, sel)] / rho(RhoProfile(0.0, a, a), t, w)
        rows.append([float(t), float(r.min()), float(r.max())])
    _write_csv(pdir / "bound_ratio.csv", ["t", "min_ratio", "max_ratio"], rows)
    files.append("plots/bound_ratio.csv")

    cd = fld.provenance.get("certificate", {})
    if cd:
        cert = SeriesCertificate(**cd)
        rows = [[n, float(s), float(cert.envelope_ratios[n]), float(cert.majorant(n, k.beta))]
                for n, s in enumerate(cert.sup_norms)]
        _write_csv(pdir / "qn_decay.csv", ["n", "sup_q_n", "envelope_ratio", "majorant"], rows)
        files.append("plots/qn_decay.csv")

    if (out / "ensemble.npz").exists():
        ens = mc_sim.PathEnsemble.load(out / "ensemble.npz")
        t = cfg["mc"]["t"]
        edges = np.append(g.x[::4] - g.h / 2, g.x[-1] + g.h / 2)
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            emp = mc_sim.empirical_density(ens, t, edges, seed=int(cfg["seed"]))
        x0 = float(ens.states[0, 0])
        i = int(np.argmin(np.abs(g.x - x0)))
        par = fld.at(t)[i].reshape(-1, 4).mean(axis=1)
        rows = [[float(c), float(e), float(lo), float(hi), float(p)]
                for c, e, lo, hi, p in zip(emp.centers, emp.density, emp.lower, emp.upper, par)]
        _write_csv(pdir / "mc_overlay.csv",
                   ["y", "empirical", "lower", "upper", "parametrix"], rows)
        files.append("plots/mc_overlay.csv")
    return files


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {
    "build-kernel": ("build",),
    "validate": ("validate",),
    "simulate": ("simulate",),
    "compare": ("compare",),
    "verify-lemma21": ("lemma21",),
    "report": STAGES,
    "run": STAGES,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levikernel",
                                description="Heat kernels of stable-like operators.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML file or preset name "
                                        f"({', '.join(sorted(PRESETS))})")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--resume", action="store_true", help="skip stages with matching hash")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--threads", type=int,
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "verify-lemma21":
            s.add_argument("--alpha", type=float, action="append",
                           help="stability index (repeatable)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out:
        over["out"] = args.out
    if args.command == "verify-lemma21":
        over["lemma21"] = {"enabled": True}
        if args.alpha:
            over["lemma21"]["alphas"] = args.alpha
    try:
        cfg = load_config(args.config, over)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    pipe = Pipeline(cfg, threads=args.threads, resume=args.resume)
    try:
        status = pipe.run(COMMANDS[args.command])
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    shown = {"validate": "checks", "compare": "compare", "lemma21": "lemma21"}
    for stage, name in shown.items():
        p = pipe.out / f"{name}.json"
        if stage in pipe.order and p.exists():
            data = json.loads(p.read_text())
            for r in data.get("checks", data.get("records", [])):
                flag = "PASS" if r["pass"] else "FAIL"
                cid = r.get("check_id", r.get("inequality-id"))
                val = r.get("measured", r.get("measured_constant"))
                print(f"{flag}  {cid:<24} {val:.4g}")
    print(f"stages run: {', '.join(pipe.ran) or 'none'}; output in {pipe.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
