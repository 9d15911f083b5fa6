"""Command-line front end.

Subcommands:

  run <config>          execute configured solvers, write one CSV per solver
  verify [--level]      run the property-check suite (exit 4 on failure)
  gen <spec> -o <path>  generate a synthetic dataset in LIBSVM format

Exit codes for run: 0 success, 1 config/input error, 2 solver divergence,
3 output I/O failure. CSV files are written to `<name>.partial` and renamed
into place only when complete, so an interrupted run never leaves a file
that looks finished.

Traces are deterministic for a fixed config: reruns produce byte-identical
CSVs except the elapsed_ns column. --seed overrides every solver's seed
(the dataset seed stays as configured); --threads (default from
PROXSQN_THREADS) runs configured solvers concurrently, one per worker.
"""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import os
import sys

import click

from .config import ExperimentConfig, parse_config
from .dataio import generate_synthetic, parse_libsvm, write_libsvm
from .errors import ConfigError, ConvergenceError, DivergenceError, \
    LibsvmFormatError
from .model import LossKind, SmoothObjective
from .prox import RegKind, Regularizer
from .solver import RunResult, reference_solution, run as run_solver
from .verify import run_checks

CSV_HEADER = "epoch,iter,objective,subopt,grad_evals,metric_rebuilds,elapsed_ns"


@click.group()
@click.option("--seed", type=int, default=None,
              help="Override the seed of every configured solver.")
@click.option("--threads", type=int, default=1, envvar="PROXSQN_THREADS",
              show_default=True, help="Concurrent solver runs.")
@click.option("--output", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides the config's `output`).")
@click.pass_context
def main(ctx, seed, threads, output):
    """Composite-objective solver toolkit: stochastic quasi-Newton with
    variance reduction, first-order baselines, and a verification suite."""
    ctx.obj = {"seed": seed, "threads": max(1, threads), "output": output}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str, require_solvers: bool = True) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _fail(1, f"cannot read config {path}: {exc}")
    try:
        return parse_config(text, require_solvers=require_solvers)
    except ConfigError as exc:
        _fail(1, f"{path}: {exc}")


def _materialize(cfg: ExperimentConfig):
    if cfg.synthetic is not None:
        ds, _ = generate_synthetic(cfg.synthetic)
        return ds
    try:
        with open(cfg.dataset, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        _fail(1, f"cannot read dataset {cfg.dataset}: {exc}")
    try:
        return parse_libsvm(
            text, binary_labels=cfg.loss is LossKind.LOGISTIC_RIDGE)
    except LibsvmFormatError as exc:
        _fail(1, f"{cfg.dataset}: {exc}")


def _format_float(v: float) -> str:
    return repr(float(v))


def _write_csv(path: str, records) -> None:
    lines = [CSV_HEADER]
    for r in records:
        sub = "" if r.subopt is None else _format_float(r.subopt)
        lines.append(",".join((
            str(r.epoch), str(r.iteration), _format_float(r.objective), sub,
            str(r.grad_evals), str(r.metric_rebuilds), str(r.elapsed_ns))))
    partial = path + ".partial"
    with open(partial, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(partial, path)


@main.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.pass_context
def cmd_run(ctx, config_path):
    """Run every solver in CONFIG_PATH and write one CSV trace per solver."""
    cfg = _load_config(config_path)
    if ctx.obj["seed"] is not None:
        cfg.solvers = [
            (name, dataclasses.replace(sc, seed=ctx.obj["seed"]))
            for name, sc in cfg.solvers]
    ds = _materialize(cfg)
    obj = SmoothObjective.build(ds, cfg.loss, cfg.ridge)
    reg = Regularizer(RegKind.L1 if cfg.lambda1 > 0 else RegKind.ZERO,
                      cfg.lambda1)
    try:
        _, p_star = reference_solution(obj, reg, tol=cfg.ref_tol)
    except ConvergenceError as exc:
        click.echo(f"warning: no reference solution ({exc}); "
                   f"traces carry raw objectives only", err=True)
        p_star = None

    out_dir = ctx.obj["output"] or cfg.output or "."
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        _fail(3, f"cannot create output directory {out_dir}: {exc}")
    stem = os.path.splitext(os.path.basename(config_path))[0]

    def one(item) -> tuple[str, RunResult]:
        name, sc = item
        return name, run_solver(obj, reg, sc, p_star=p_star)

    results: dict[str, RunResult] = {}
    diverged: dict[str, str] = {}
    with cf.ThreadPoolExecutor(max_workers=ctx.obj["threads"]) as pool:
        futures = {pool.submit(one, item): item[0] for item in cfg.solvers}
        for fut in cf.as_completed(futures):
            name = futures[fut]
            try:
                results[name] = fut.result()[1]
            except DivergenceError as exc:
                diverged[name] = str(exc)

    wrote = []
    for name, _ in cfg.solvers:
        if name not in results:
            continue
        path = os.path.join(out_dir, f"{stem}_{name}.csv")
        try:
            _write_csv(path, results[name].records)
        except OSError as exc:
            _fail(3, f"cannot write {path}: {exc}")
        wrote.append((name, path))

    click.echo(f"{'solver':<18} {'objective':>14} {'subopt':>12} "
               f"{'grad_evals':>11} {'rebuilds':>9} {'ms':>9}")
    for name, _ in cfg.solvers:
        if name in diverged:
            click.echo(f"{name:<18} diverged: {diverged[name]}")
            continue
        last = results[name].records[-1]
        sub = "-" if last.subopt is None else f"{last.subopt:.3e}"
        click.echo(f"{name:<18} {last.objective:>14.8f} {sub:>12} "
                   f"{last.grad_evals:>11} {last.metric_rebuilds:>9} "
                   f"{last.elapsed_ns / 1e6:>9.1f}")
    for name, path in wrote:
        click.echo(f"wrote {path}")
    if diverged:
        sys.exit(2)


@main.command("verify")
@click.option("--level", type=click.Choice(["fast", "full"]), default="fast",
              show_default=True)
def cmd_verify(level):
    """Run the registered property checks; exit 4 if any fail."""
    failed = False
    for res in run_checks(level):
        status = "PASS" if res.passed else "FAIL"
        failed = failed or not res.passed
        click.echo(f"{status} {res.name:<24} margin={res.margin:+.3e}  "
                   f"{res.detail}")
    if failed:
        sys.exit(4)
    click.echo("all checks passed")


@main.command("gen")
@click.argument("spec_config", type=click.Path(dir_okay=False))
@click.option("-o", "--out", "out_path", required=True,
              type=click.Path(dir_okay=False),
              help="Destination LIBSVM file.")
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False),
              default=None, help="Also write the planted point, one "
                                 "coordinate per line.")
def cmd_gen(spec_config, out_path, truth_path):
    """Generate the synthetic dataset described by SPEC_CONFIG."""
    cfg = _load_config(spec_config, require_solvers=False)
    if cfg.synthetic is None:
        _fail(1, f"{spec_config}: gen needs a synthetic.* section")
    ds, x_true = generate_synthetic(cfg.synthetic)
    try:
        partial = out_path + ".partial"
        with open(partial, "w", encoding="utf-8") as fh:
            fh.write(write_libsvm(ds))
        os.replace(partial, out_path)
        if truth_path is not None:
            with open(truth_path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(repr(float(v)) for v in x_true) + "\n")
    except OSError as exc:
        _fail(3, f"cannot write dataset: {exc}")
    click.echo(f"wrote {out_path}: n={ds.n} d={ds.d} nnz={ds.nnz} "
               f"loss={cfg.loss.value}")


if __name__ == "__main__":
    main()
