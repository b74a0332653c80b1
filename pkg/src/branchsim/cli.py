"""Command-line experiment runner.

``branchsim run --config example1`` executes the experiment described by a
config (a path, or the name of a bundled config) in a fresh, append-only run
directory ``<out>/run-NNNN`` and writes CSV tables, SVG plots and, last of all,
``manifest.json``.  Exit status: 0 when every verdict passes, 1 when any check
fails, 2 on configuration or precondition errors.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from branchsim import __version__, limits, plotting
from branchsim.config import ConfigError, ExperimentConfig, load_config
from branchsim.moments import var_tables
from branchsim.regvar import SATISFIED, check_conditions
from branchsim.reports import TestReport, aggregate, write_reports
from branchsim.verify import (PreconditionError, lemma1_check, lemma8_check, lemmas456_check,
                              lindeberg_check, normalizer, theorem1_check, theorem2_check,
                              variance_check)

log = logging.getLogger("branchsim")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
MANIFEST = "manifest.json"


def bundled_configs() -> list:
    return sorted(p.name[:-4] for p in resources.files("branchsim.configs").iterdir()
                  if p.name.endswith(".cfg"))


def resolve_config(ref: str):
    path = Path(ref)
    if path.exists():
        return load_config(path)
    name = ref[:-4] if ref.endswith(".cfg") else ref
    if name in bundled_configs():
        res = resources.files("branchsim.configs") / f"{name}.cfg"
        with resources.as_file(res) as p:
            return load_config(p)
    raise ConfigError(f"no such config file or bundled config (bundled: {', '.join(bundled_configs())})",
                      ref)


def new_run_dir(root) -> Path:
    """Create the next ``run-NNNN`` under ``root``; never reuses an existing directory."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    taken = [int(p.name[4:]) for p in root.glob("run-*") if p.name[4:].isdigit()]
    k = max(taken, default=0) + 1
    while True:
        d = root / f"run-{k:04d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir: Path, cfg: ExperimentConfig, verdict: bool) -> Path:
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != MANIFEST)
    manifest = {
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "kind": cfg.kind,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "files": [{"path": str(p.relative_to(run_dir)), "sha256": _sha256(p),
                   "bytes": p.stat().st_size} for p in files],
        "verdict": "pass" if verdict else "fail",
    }
    out = run_dir / MANIFEST
    tmp = run_dir / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2) + "\n")
    os.replace(tmp, out)
    return out


def audit_run(run_dir) -> list:
    """Problems with a finished run directory (empty list when consistent)."""
    run_dir = Path(run_dir)
    mpath = run_dir / MANIFEST
    if not mpath.exists():
        return ["missing manifest (incomplete run)"]
    manifest = json.loads(mpath.read_text())
    listed = {f["path"]: f for f in manifest["files"]}
    problems = []
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            rel = str(p.relative_to(run_dir))
            if rel not in listed:
                problems.append(f"orphan file {rel}")
            elif _sha256(p) != listed[rel]["sha256"]:
                problems.append(f"hash mismatch {rel}")
    for rel in listed:
        if not (run_dir / rel).exists():
            problems.append(f"missing file {rel}")
    return problems


class RunWriter:
    """Writes artifacts into a run directory with the seed/config header."""

    def __init__(self, run_dir: Path, cfg: ExperimentConfig):
        self.dir = run_dir
        self.header = f"seed={cfg.seed} config_sha256={cfg.sha256()}"

    def table(self, name, columns, rows):
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return path

    def reports(self, reports, name="reports.csv"):
        return write_reports(self.dir / name, reports, self.header)

    def curve(self, kind, params, grid, name=None):
        tc = limits.TimeChange(kind, params)
        return tc.dump_csv(self.dir / (name or f"curve_{kind}.csv"), grid, self.header)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _summary_rows(summary):
    return ([t, xm, xv, zm, zv] for t, xm, xv, zm, zv in summary.rows())


def run_theorem1(cfg, w: RunWriter):
    proc = cfg.process
    res = theorem1_check(proc, cfg.n_list, cfg.replicates, cfg.seed, threads=cfg.threads,
                         grid=cfg.grid, threshold=cfg.threshold, probes=cfg.probes)
    w.table("sup_distance.csv", ["n", "replicate", "sup_distance"],
            ([n, r, d] for n, s in res.summaries.items() for r, d in enumerate(s.sup_distances)))
    for n, s in res.summaries.items():
        w.table(f"grid_summary_n{n}.csv", ["t", "X_mean", "X_var", "Z_mean", "Z_var"], _summary_rows(s))
    w.curve("pi_alpha", proc.drift, cfg.grid)
    last = res.summaries[cfg.n_list[-1]]
    plotting.plot_overlay(cfg.grid, last.x_paths, limits.pi_alpha(proc.drift, cfg.grid),
                          w.dir / "overlay_X_vs_pi.svg",
                          title=f"X_n(t), n={last.n}, {len(last.x_paths)} paths", ref_label="pi_alpha")
    return res


def run_theorem2(cfg, w: RunWriter):
    proc = cfg.process
    n = cfg.n_list[-1]
    res = theorem2_check(proc, n, cfg.replicates, cfg.time_points, cfg.seed, threads=cfg.threads,
                         ks_alpha=cfg.ks_alpha, probes=cfg.probes)
    s = res.summaries[n]
    w.table("z_samples.csv", ["replicate"] + [f"Z(t={t})" for t in cfg.time_points],
            ([r] + list(row) for r, row in enumerate(s.z_at)))
    w.table(f"grid_summary_n{n}.csv", ["t", "X_mean", "X_var", "Z_mean", "Z_var"], _summary_rows(s))
    w.curve("phi", proc.drift, cfg.grid)
    w.curve("phi_star", proc.drift, cfg.grid)
    plotting.plot_series(s.grid, {"Var Z_n(t)": s.z_var, "phi(t)": limits.phi(proc.drift, s.grid)},
                         w.dir / "var_Z_vs_phi.svg", title=f"Var Z_n(t), n={n}")
    return res


def run_lemma1(cfg, w: RunWriter):
    res = lemma1_check(cfg.process, cfg.n_list, cfg.replicates, cfg.seed, threads=cfg.threads,
                       horizon=cfg.horizon, threshold=cfg.threshold)
    rows = [r for r in res if r.name.startswith("lemma1.z2_sup_l2")]
    proxies = [float(r.note.split("=")[1]) for r in rows]
    w.table("z2_sup_l2.csv", ["n", "estimate", "std_error", "l2_proxy"],
            ([n, r.statistic, r.std_error, p] for n, r, p in zip(cfg.n_list, rows, proxies)))
    plotting.plot_series(list(cfg.n_list), {"E sup|Z2|^2": [r.statistic for r in rows],
                                            "L2 proxy": proxies},
                         w.dir / "z2_trend.svg", title="immigration drift term", xlabel="n", logy=True)
    return res


def run_lemmas456(cfg, w: RunWriter):
    res = lemmas456_check(cfg.process, cfg.n_list[-1], thetas=cfg.theta)
    for kind in ("mu_alpha", "nu_over_a", "lambda_beta"):
        w.curve(kind, cfg.process.drift, cfg.grid)
    return res


def run_lemma8(cfg, w: RunWriter):
    model = cfg.process.immigration
    res = lemma8_check(model, cfg.n_list[-1], cfg.lags, cfg.replicates, cfg.seed)
    exact = getattr(model, "exact_psi", None)
    w.table("psi.csv", ["lag", "psi_bound", "psi_exact"],
            ([L, model.psi_bound(L), exact(L) if exact else math.nan] for L in cfg.lags))
    return res


def run_variance(cfg, w: RunWriter):
    proc = cfg.process
    out = []
    for n in cfg.n_list:
        out.extend(variance_check(proc, n, cfg.replicates, cfg.seed, threads=cfg.threads))
        var_tables(proc.law, proc.immigration, n, n).to_csv(w.dir / f"moment_tables_n{n}.csv", w.header)
    return out


def conditions_reports(cfg, w: RunWriter):
    proc = cfg.process
    rep = check_conditions(proc, cfg.probes)
    w.table("conditions.csv", ["condition", "n", "ratio", "verdict"], rep.to_rows())
    out = [TestReport(f"condition.{e.name}", 0 if e.verdict == SATISFIED else 1, 0, 0,
                      note=f"{e.verdict}; {e.note}".rstrip("; ")) for e in rep.entries]
    lind_probes = tuple(n for n in cfg.probes if n >= 1000) or cfg.probes
    out.extend(lindeberg_check(proc.law, normalizer(proc), lind_probes))
    return out


def run_curves(cfg, w: RunWriter):
    paths = [w.curve(kind, cfg.process.drift, cfg.grid) for kind in limits.CURVES]
    plotting.plot_curves(paths, w.dir)
    return []


RUNNERS = {
    "theorem1": run_theorem1,
    "theorem2": run_theorem2,
    "lemma1": run_lemma1,
    "lemmas456": run_lemmas456,
    "lemma8": run_lemma8,
    "variance": run_variance,
    "conditions": conditions_reports,
    "curves": run_curves,
}


def execute(cfg: ExperimentConfig, out_root, runner=None):
    """Run one experiment; returns (run directory, reports, verdict)."""
    runner = runner or RUNNERS[cfg.kind]
    run_dir = new_run_dir(out_root)
    w = RunWriter(run_dir, cfg)
    (run_dir / "config.cfg").write_text(cfg.canonical_text())
    reports = list(runner(cfg, w))
    verdict = aggregate(reports)
    if reports:
        w.reports(reports)
    lines = [f"# {w.header}", f"kind={cfg.kind} name={cfg.process.name}"]
    lines += [r.line() for r in reports]
    lines.append(f"VERDICT {'PASS' if verdict else 'FAIL'}")
    (run_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    write_manifest(run_dir, cfg, verdict)
    return run_dir, reports, verdict


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="branchsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"branchsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiment named by the config"),
                        ("curves", "tabulate and plot the limit curves of the config's parameters"),
                        ("conditions", "probe the growth conditions and the Lindeberg statistic")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True,
                       help=f"config path or bundled name ({', '.join(bundled_configs())})")
        p.add_argument("--out", default=None, help="root directory for run-NNNN folders")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads for replicates")
        p.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.config).with_overrides(args.seed, args.threads, args.out)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be >= 1", "--threads")
        runner = {"curves": run_curves, "conditions": conditions_reports}.get(args.command)
        run_dir, reports, verdict = execute(cfg, cfg.output_dir, runner)
    except (ConfigError, PreconditionError) as exc:
        print(f"branchsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in reports:
        log.info(r.line())
    print(f"{run_dir}: {'PASS' if verdict else 'FAIL'} ({len(reports)} checks)")
    return EXIT_PASS if verdict else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
