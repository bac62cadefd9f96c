"""Experiment runner CLI.

Subcommands: train (one run), compare (method head-to-head on shared
seed/data), sweep-shots (one run per shot count), verify-bounds
(empirical gradient variance against the closed-form bound).  Every
artifact is a deterministic function of (config, seed): re-running a
command reproduces byte-identical outputs regardless of worker count.
Wall-clock timings are therefore logged, never written into artifacts;
the wall_ms metrics column is emitted as 0.

Exit codes: 0 success, 1 check failure, 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import federation, qnn, theory
from .config import (
    ConfigError,
    ExperimentConfig,
    config_sha256,
    parse_config,
    resolved_text,
)
from .data import DataConfigError, DataFormatError
from .noise import CalibrationError, NoiseModel
from .qnn import QnnSpec
from .rng import SeedTree

__all__ = ["main", "cmd_train", "cmd_compare", "cmd_sweep_shots", "cmd_verify_bounds"]

logger = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "round",
    "global_loss",
    "global_acc",
    "mean_x",
    "mean_extra_epochs",
    "mean_local_loss",
    "wall_ms",
]

METHOD_TOGGLES = {
    "qfl": (False, False),
    "pqfl": (False, True),
    "spqfl": (True, True),
}

_IO_ERRORS = (ConfigError, CalibrationError, DataFormatError, DataConfigError, OSError)


class UsageError(ValueError):
    """Bad command-line arguments."""


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_resolved(cfg: ExperimentConfig, out_dir: Path) -> None:
    (out_dir / "resolved.cfg").write_text(resolved_text(cfg), encoding="utf-8")


def _write_model(cfg: ExperimentConfig, params: np.ndarray, path: Path) -> None:
    lines = [
        f"# config_sha256 {config_sha256(cfg)}",
        f"# n_params {len(params)}",
    ]
    lines.extend(_fmt(v) for v in params)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _metrics_row(report: federation.RoundReport) -> list[str]:
    return [
        str(report.round_index),
        _fmt(report.global_loss),
        _fmt(report.global_accuracy),
        _fmt(report.mean_x),
        _fmt(report.mean_extra_epochs),
        _fmt(report.mean_local_loss),
        "0",
    ]


def _run_one(cfg: ExperimentConfig, out_dir: Path, workers: int) -> list[federation.RoundReport]:
    """Train once, streaming metric rows; returns the report list."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved(cfg, out_dir)
    reports: list[federation.RoundReport] = []
    started = time.perf_counter()
    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        fh.flush()

        def on_round(report):
            reports.append(report)
            writer.writerow(_metrics_row(report))
            fh.flush()

        _, server, _ = federation.run_training(cfg, on_round=on_round, workers=workers)
    _write_model(cfg, server.global_params, out_dir / "final_model.txt")
    logger.info(
        "run complete: %d rounds in %.1f s -> %s",
        len(reports), time.perf_counter() - started, out_dir,
    )
    return reports


def cmd_train(cfg: ExperimentConfig, workers: int = 1) -> int:
    _run_one(cfg, Path(cfg.out), workers)
    return 0


def cmd_compare(cfg: ExperimentConfig, methods: list[str], workers: int = 1) -> int:
    """Train each method on identical seed and data, then summarize.

    The summary's delta_acc_vs_first column is each method's final
    accuracy minus the first listed method's, sign preserved.
    """
    if len(methods) < 2:
        raise UsageError("compare needs at least two methods")
    if len(set(methods)) != len(methods):
        raise UsageError(f"duplicate methods in {methods}")
    for m in methods:
        if m not in METHOD_TOGGLES:
            raise UsageError(f"unknown method {m!r}; choose from {sorted(METHOD_TOGGLES)}")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in methods:
        sporadic, personalization = METHOD_TOGGLES[method]
        cfg_m = replace(
            cfg,
            train=replace(cfg.train, sporadic=sporadic, personalization=personalization),
            out=str(out_dir / method),
        )
        reports = _run_one(cfg_m, Path(cfg_m.out), workers)
        final_loss = reports[-1].global_loss if reports else float("nan")
        final_acc = reports[-1].global_accuracy if reports else float("nan")
        reached = [
            r.round_index for r in reports
            if r.global_accuracy >= cfg.compare.acc_threshold
        ]
        rows.append((method, final_loss, final_acc, reached[0] if reached else -1))
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "final_loss", "final_acc", "rounds_to_threshold", "delta_acc_vs_first"]
        )
        base_acc = rows[0][2]
        for method, loss, acc, reached in rows:
            writer.writerow([method, _fmt(loss), _fmt(acc), str(reached), _fmt(acc - base_acc)])
    return 0


def cmd_sweep_shots(cfg: ExperimentConfig, shot_list: list[int], workers: int = 1) -> int:
    """One training run per shot count, shared seed and data."""
    if not shot_list:
        raise UsageError("sweep-shots needs a non-empty shot list")
    if any(m < 1 for m in shot_list):
        raise UsageError(f"shot counts must be >= 1, got {shot_list}")
    if len(set(shot_list)) != len(shot_list):
        raise UsageError(f"duplicate shot counts in {shot_list}")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    finals = {}
    for m in shot_list:
        cfg_m = replace(
            cfg,
            train=replace(cfg.train, m_shots=int(m)),
            out=str(out_dir / f"M{m}"),
        )
        reports = _run_one(cfg_m, Path(cfg_m.out), workers)
        finals[m] = reports[-1].global_loss if reports else float("nan")
    with open(out_dir / "sweep_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shots", "final_loss"])
        for m in sorted(finals):
            writer.writerow([str(m), _fmt(finals[m])])
    return 0


def _verify_rows(cfg: ExperimentConfig):
    """Build the verify-bounds check table (list of row tuples)."""
    seeds = SeedTree(cfg.seed)
    nu = cfg.train.nu
    noiseless = NoiseModel.noiseless()
    rows = []

    def row(name, empirical, bound, ok):
        rows.append((name, empirical, bound, bool(ok)))

    # two-class circuits: a single class has a constant softmax and a
    # degenerate (identically zero) loss gradient
    specs = [QnnSpec(2, 1, 2), QnnSpec(3, 1, 2)]
    for i, spec in enumerate(specs):
        rng = seeds.stream("verify", i)
        params = qnn.init_params(spec, rng, 0.5)
        features = rng.uniform(0.0, np.pi, spec.n_qubits)
        sample = (features, 0)
        mean_by_m = {}
        for m in (10, 100):
            per_comp, mean_var = theory.empirical_grad_variance(
                spec, params, sample, m, 100, noiseless, seeds.stream("verify", i, m)
            )
            mean_by_m[m] = mean_var
            total = float(per_comp.sum())
            bound = theory.grad_variance_bound(
                theory.BoundParams(
                    nu=nu, n_outcomes=2, n_params=qnn.n_params(spec),
                    obs_trace_sq=2.0, shots=m,
                )
            )
            row(f"circuit{i}_M{m}_total_grad_var", total, bound, total <= bound)
        ratio = mean_by_m[10] / mean_by_m[100]
        row(f"circuit{i}_var_ratio_M10_over_M100", ratio, "in [3, 20]", 3.0 <= ratio <= 20.0)
        _, exact_var = theory.empirical_grad_variance(
            spec, params, sample, qnn.EXACT, 30, noiseless, seeds.stream("verify", i, "exact")
        )
        row(f"circuit{i}_exact_mode_var", exact_var, 0.0, exact_var == 0.0)

    # Closed-form spot checks against hand-computed values
    p = theory.BoundParams(nu=1.0, n_outcomes=2, n_params=40, obs_trace_sq=2.0,
                           shots=100, n_clients=10)
    row("grad_variance_bound_example", theory.grad_variance_bound(p), 0.8,
        abs(theory.grad_variance_bound(p) - 0.8) < 1e-12)
    gp = theory.BoundParams(eta=0.1, mu=1.0, smoothness=2.0, nu=1.0, n_outcomes=2,
                            n_params=40, obs_trace_sq=2.0, shots=100)
    gap = theory.gap_bound(gp, 10, 1.0)
    expected_gap = (1 - 0.1) ** 10 + 0.5 * 0.1 * 2.0 * 0.8 / 1.0
    row("gap_bound_example", gap, expected_gap, abs(gap - expected_gap) < 1e-12)
    tr = theory.BoundParams(smoothness=2.0, mu=1.0)
    rate = theory.global_rate_bound(tr, 0, 1.0, composite=0.0)
    row("global_rate_bound_K0_example", rate, 1.5, abs(rate - 1.5) < 1e-9)
    its = theory.shot_noise_iterations(0.01, 1.0, 2.0, 0.5, 1.0)
    row("shot_noise_iterations_example", its, 110, its == 110)
    return rows


def cmd_verify_bounds(cfg: ExperimentConfig) -> int:
    rows = _verify_rows(cfg)
    header = (
        f"convention: nu={cfg.train.nu}, N_h=2, Tr(H^2)=2 "
        "(single-qubit Z observable)"
    )
    print(header)
    print(f"{'quantity':42s} {'empirical':>14s} {'bound':>14s} {'result':>7s}")
    all_ok = True
    for name, empirical, bound, ok in rows:
        all_ok &= ok
        emp = f"{empirical:.6g}" if isinstance(empirical, float) else str(empirical)
        bnd = f"{bound:.6g}" if isinstance(bound, float) else str(bound)
        print(f"{name:42s} {emp:>14s} {bnd:>14s} {'PASS' if ok else 'FAIL':>7s}")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bounds.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "empirical", "bound", "result"])
        for name, empirical, bound, ok in rows:
            writer.writerow([name, str(empirical), str(bound), "PASS" if ok else "FAIL"])
    return 0 if all_ok else 1


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qflsim",
        description="Quantum federated learning simulator with sporadic, "
        "noise-weighted, proximally personalized local training.",
    )
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="client threads per round (results identical for any count)")

    common(sub.add_parser("train", help="run one training experiment"))
    p_cmp = sub.add_parser("compare", help="run several methods on identical data")
    common(p_cmp)
    p_cmp.add_argument("--methods", required=True,
                       help="comma list from qfl,pqfl,spqfl (at least two)")
    p_swp = sub.add_parser("sweep-shots", help="one run per measurement shot count")
    common(p_swp)
    p_swp.add_argument("--shots", required=True, help="comma list of shot counts")
    p_ver = sub.add_parser("verify-bounds", help="check measured variance against bounds")
    common(p_ver)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError(f"--seed must be >= 0, got {args.seed}")
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        if args.command == "train":
            return cmd_train(cfg, workers=args.workers)
        if args.command == "compare":
            return cmd_compare(cfg, [m.strip() for m in args.methods.split(",") if m.strip()],
                               workers=args.workers)
        if args.command == "sweep-shots":
            return cmd_sweep_shots(cfg, _parse_int_list(args.shots), workers=args.workers)
        if args.command == "verify-bounds":
            return cmd_verify_bounds(cfg)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
