"""Command line: ``nlslab run <config>``, ``nlslab validate <config>``, ``nlslab list-suites``.

A run writes into the output directory (``$NLSLAB_OUTPUT_DIR`` overrides the
configured one)::

    summary.json            config, every check report, overall verdict
    metadata.json           timestamps, durations, versions
    reports/<check>.json    one file per check
    series/<series>.csv     t,value,weight_exponent at 17 significant digits

summary.json depends only on the configuration, so repeated runs produce
identical bytes. Exit status is 0 iff every check passed, 1 if a check
failed or a suite errored, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import SUITES, ExperimentConfig, dump_config, load_config
from .errors import ConfigError, NLSLabError
from .exponents import Regime, compute_exponents, existence_time
from .grid import Gaussian, sample_datum
from .lab import (
    check_decay,
    check_dependence,
    check_dispersive,
    check_global,
    check_local,
    check_selfsimilar,
    solve_global,
)
from .lorentz import weak_norm
from .mild import NormMode, TimeMesh, default_grading, measure_constants

log = logging.getLogger("nlslab")

OUTPUT_ENV = "NLSLAB_OUTPUT_DIR"


class _Sink:
    """All artifact writes go through here, one at a time."""

    def __init__(self, root: Path):
        self.root = root
        self.written = []

    def write(self, relpath: str, text: str):
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.written.append(relpath)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def series_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value", "weight_exponent"])
    for t, v in zip(series.t, series.value):
        w.writerow([format(float(t), ".17g"), format(float(v), ".17g"), format(float(series.weight_exponent), ".17g")])
    return buf.getvalue()


# --- suite runners --------------------------------------------------------------
# Each returns a list of CheckReports.


def _phi(cfg: ExperimentConfig):
    return sample_datum(cfg.datum, cfg.grid, rho=cfg.params.rho, cell_average=cfg.cell_average)


def _run_dispersive(cfg):
    o, tol = cfg.options["dispersive"], cfg.tolerances
    return [check_dispersive(cfg.params, o["p_list"], o["t_list"], cfg.grid, width=o["width"],
                             slope_rtol=tol["slope_rtol"], slope_atol=tol["slope_atol"],
                             constant_tol=tol["constant_tol"], constant_window=tuple(o["constant_window"]),
                             wrap_tol=tol["wrap_tol"])]


def _run_local(cfg):
    o, tol = cfg.options["local"], cfg.tolerances
    return [check_local(_phi(cfg), cfg.params, M=cfg.mesh.M, theta=o["theta"], tol=tol["picard_tol"],
                        max_iter=cfg.max_iter, sweep=o["sweep"], uniqueness_factor=tol["uniqueness_factor"],
                        scaling_tol=tol["scaling_tol"])]


def _run_global(cfg):
    tol = cfg.tolerances
    return [check_global(_phi(cfg), cfg.params, cfg.mesh, tol=tol["picard_tol"], max_iter=cfg.max_iter,
                         residual_tol=tol["residual_tol"])]


def _run_selfsimilar(cfg):
    o, tol = cfg.options["selfsimilar"], cfg.tolerances
    return [check_selfsimilar(cfg.params, o["mu"], cfg.datum.amplitude, cfg.grid, cfg.mesh, window=o["window"],
                              tol=tol["selfsimilar_tol"], picard_tol=tol["picard_tol"], max_iter=cfg.max_iter,
                              cell_average=cfg.cell_average)]


def _run_decay(cfg):
    o, tol = cfg.options["decay"], cfg.tolerances
    phi = _phi(cfg)
    # perturbation with a seed-dependent phase, so distinct seeds probe distinct directions
    phase = np.exp(2j * np.pi * np.random.default_rng(cfg.seed).random())
    bump = sample_datum(Gaussian(o["perturbation_amplitude"] * phase, o["perturbation_width"]), cfg.grid)
    u, _ = solve_global(phi, cfg.params, cfg.mesh, tol["picard_tol"], cfg.max_iter)
    v, _ = solve_global(phi + bump, cfg.params, cfg.mesh, tol["picard_tol"], cfg.max_iter)
    return [check_decay(u, v, h, o["mode"], tol=tol["decay_tol"]) for h in o["h_list"]]


def _run_dependence(cfg):
    o, tol = cfg.options["dependence"], cfg.tolerances
    phi = _phi(cfg)
    seq = [phi * (1.0 + 1.0 / k) for k in o["indices"]]
    exps = compute_exponents(cfg.params)
    if exps.regime is Regime.LOCAL:
        mode = NormMode.LOCAL_AB
        grading = default_grading(exps)
        largest = max(seq + [phi], key=lambda f: weak_norm(f, exps.data_index))
        ref = measure_constants(largest, exps, TimeMesh(1.0, cfg.mesh.M, grading), cfg.params.lam)
        T = existence_time(weak_norm(largest, exps.data_index), ref, exps, o["theta"])
        mesh = TimeMesh(T, cfg.mesh.M, grading)
    else:
        mode, mesh = NormMode.GLOBAL_A, cfg.mesh
    return [check_dependence(seq, phi, cfg.params, mode, mesh, tol=tol["dependence_tol"],
                             picard_tol=tol["picard_tol"], max_iter=cfg.max_iter)]


_RUNNERS = {
    "dispersive": _run_dispersive,
    "local": _run_local,
    "global": _run_global,
    "selfsimilar": _run_selfsimilar,
    "decay": _run_decay,
    "dependence": _run_dependence,
}


def run_experiment(cfg: ExperimentConfig, output_dir: str | os.PathLike | None = None) -> tuple[bool, Path]:
    """Run every selected suite and write artifacts. Returns (all passed, output dir)."""
    root = Path(output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    sink = _Sink(root)
    started = datetime.now(timezone.utc)
    checks, failures, durations = [], [], {}
    for suite in cfg.suites:
        t0 = time.perf_counter()
        try:
            reports = _RUNNERS[suite](cfg)
        except (NLSLabError, ValueError, ArithmeticError) as exc:
            log.error("suite %s failed: %s", suite, exc)
            failures.append({"suite": suite, "error": type(exc).__name__, "message": str(exc)})
            reports = []
        durations[suite] = time.perf_counter() - t0
        for i, rep in enumerate(reports):
            stem = f"{suite}_{i}_{rep.name}"
            entry = dict(rep.to_dict(), suite=suite, id=stem)
            checks.append(entry)
            # write as we go so a later failure keeps these artifacts
            sink.write(f"reports/{stem}.json", _dumps(entry))
            for s in rep.series:
                sink.write(f"series/{stem}__{s.name}.csv", series_csv(s))
            log.info("%s: %s", stem, "pass" if rep.passed else "FAIL")

    passed = not failures and all(c["passed"] for c in checks) and bool(checks)
    summary = {
        "config": cfg.to_dict(),
        "checks": checks,
        "failures": failures,
        "passed": passed,
    }
    sink.write("summary.json", _dumps(summary))
    sink.write("config.yaml", dump_config(cfg))
    metadata = {
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "durations_s": durations,
        "nlslab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "files": sorted(sink.written + ["metadata.json"]),
    }
    sink.write("metadata.json", _dumps(metadata))
    return passed, root


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    passed, root = run_experiment(cfg, args.output_dir)
    print(f"{'PASS' if passed else 'FAIL'}: artifacts in {root}")
    return 0 if passed else 1


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.config}: ok ({', '.join(cfg.suites)})")
    return 0


def _cmd_list(args) -> int:
    for name, text in SUITES.items():
        print(f"{name:12s} {text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlslab", description="Mild-solution NLS laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the suites of a configuration")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output-dir", default=None,
                       help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p_run.set_defaults(func=_cmd_run)
    p_val = sub.add_parser("validate", help="parse and validate a configuration without computing")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)
    p_list = sub.add_parser("list-suites", help="show the available suites")
    p_list.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
