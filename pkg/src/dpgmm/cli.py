"""Command-line surface: fit, plan, release, evaluate, sample, audit,
experiment.  Every command is a pure function of its input files, flags and
seed; rerunning writes byte-identical outputs."""

import click
import numpy as np

from . import serialize
from .adjacency import VARIANTS, AdjacencyMode, clip_dataset, enumerate_adjacency
from .audit import run_audit
from .divergence import expected_kl, monte_carlo_expected_kl
from .errors import DpGmmError
from .experiments import SweepSpec, run_sweep
from .mechanisms import ReleasedGmm, release, sample_gmm
from .model import (
    GmmParams,
    LabeledDataset,
    fit_gmm,
    kmeans_label,
    load_dataset,
    load_points,
    save_dataset,
)
from .planner import NoisePlan, PrivacySpec
from .planner import plan as build_plan
from .planner import verify_ledger


@click.group()
def main():
    """Differentially private release of Gaussian mixture models."""


def _load_clipped_dataset(input_path, k, clip):
    data = load_dataset(input_path, k)
    if clip is not None:
        data = clip_dataset(data, clip)
    return data


def _check_model_matches(model, data):
    if model.n != data.n or model.d != data.d or model.k != data.k:
        raise click.ClickException(
            f"model (n={model.n}, d={model.d}, k={model.k}) does not match"
            f" dataset (n={data.n}, d={data.d}, k={data.k})"
        )
    counts = tuple(int(c) for c in data.class_counts())
    if counts != model.weights.counts:
        raise click.ClickException(
            f"model counts {model.weights.counts} do not match dataset counts {counts}"
        )


def _adjacency_mode(variant, clip):
    if variant in ("feature", "add") and clip is None:
        raise click.UsageError(f"--adjacency {variant} requires --clip B")
    try:
        return AdjacencyMode(variant, clip_bound=clip)
    except ValueError as exc:
        raise click.UsageError(str(exc))


@main.command("fit")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", required=True, type=click.IntRange(min=1))
@click.option("--kmeans", is_flag=True,
              help="Ignore/omit the label column and pre-label by K-means.")
@click.option("--seed", default=0, type=click.IntRange(min=0), show_default=True,
              help="Seed for K-means initialization.")
@click.option("--clip", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Clip every feature vector to this L2 norm before fitting.")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_fit(input_path, k, kmeans, seed, clip, output):
    """Fit a mixture to a labeled CSV and write the model JSON."""
    try:
        if kmeans:
            points, _ = load_points(input_path, with_labels=False)
            labels = kmeans_label(points, k, seed)
            data = LabeledDataset(points=points, labels=labels, k=k)
        else:
            data = load_dataset(input_path, k)
        if clip is not None:
            data = clip_dataset(data, clip)
        model = fit_gmm(data)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    serialize.write_json(output, model.to_dict())
    click.echo(f"wrote model for n={model.n}, d={model.d}, k={model.k} to {output}")


@main.command("plan")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", required=True, type=click.FloatRange(min=0, min_open=True))
@click.option("--delta", required=True,
              type=click.FloatRange(min=0, max=1, min_open=True, max_open=True))
@click.option("--lam", "--lambda", "lam", default=1e-3, show_default=True,
              type=click.FloatRange(min=0, max=1, min_open=True, max_open=True),
              help="Smoothing weight of the uniform lattice branch.")
@click.option("--adjacency", type=click.Choice(VARIANTS), default="label",
              show_default=True)
@click.option("--clip", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Feature-norm bound B (clips the dataset before enumeration).")
@click.option("--uniform-bound", is_flag=True,
              help="Replace per-datapoint constraints by the clip-bound closed form.")
@click.option("--eps0-frac", default=1.0 / 3.0, show_default=True,
              type=click.FloatRange(min=0, max=1, max_open=True),
              help="Fraction of epsilon assigned to the weight mechanism at start.")
@click.option("--max-iter", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_plan(model_path, input_path, epsilon, delta, lam, adjacency, clip,
             uniform_bound, eps0_frac, max_iter, output):
    """Optimize the noise plan for a fitted model under (epsilon, delta)-DP."""
    if uniform_bound and clip is None:
        raise click.UsageError("--uniform-bound requires --clip B")
    mode = _adjacency_mode(adjacency, clip)
    try:
        model = GmmParams.from_dict(serialize.read_json(model_path))
        data = _load_clipped_dataset(input_path, model.k, clip)
        _check_model_matches(model, data)
        adj = enumerate_adjacency(data, model, mode)
        spec = PrivacySpec(epsilon=epsilon, delta=delta, lam=lam, mode=mode,
                           eps0_frac=eps0_frac, uniform_bound=uniform_bound)
        built = build_plan(model, adj, spec, max_iter=max_iter)
        ledger = verify_ledger(built, adj, spec)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    serialize.write_json(output, built.to_dict())
    status = "ok" if ledger.passed else "LEDGER VIOLATION"
    click.echo(
        f"plan converged in {built.converged_iterations} iteration(s);"
        f" objective {built.objective_trace[-1]:.6g}; ledger {status}"
        f" (worst margin {ledger.worst_margin():.3e}); wrote {output}"
    )
    if not ledger.passed:
        raise click.exceptions.Exit(1)


@main.command("release")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_release(model_path, plan_path, seed, output):
    """Draw the privatized parameters and write the released model JSON."""
    try:
        model = GmmParams.from_dict(serialize.read_json(model_path))
        built = NoisePlan.from_dict(serialize.read_json(plan_path))
        released = release(model, built, seed)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    serialize.write_json(output, released.to_dict())
    click.echo(f"wrote released model to {output}")


@main.command("evaluate")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mc", "mc_trials", default=0, type=click.IntRange(min=0),
              help="Also run this many Monte Carlo release draws.")
@click.option("--lambda-draws", default=10000, show_default=True,
              type=click.IntRange(min=0))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_evaluate(model_path, plan_path, mc_trials, lambda_draws, seed, output):
    """Write the expected-KL report for a (model, plan) pair."""
    try:
        model = GmmParams.from_dict(serialize.read_json(model_path))
        built = NoisePlan.from_dict(serialize.read_json(plan_path))
        report = expected_kl(model, built, lambda_draws=lambda_draws, seed=seed)
        if mc_trials:
            mc, stderr = monte_carlo_expected_kl(model, built, mc_trials, seed)
            report.mc_estimate = mc
            report.mc_stderr = stderr
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    serialize.write_json(output, report.to_dict())
    click.echo(f"analytic expected KL {report.analytic_expected_kl:.6g}; wrote {output}")


@main.command("sample")
@click.option("--released", "released_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "count", required=True, type=click.IntRange(min=1))
@click.option("--seed", required=True, type=click.IntRange(min=0))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_sample(released_path, count, seed, output):
    """Draw synthetic labeled rows from a released model (post-processing)."""
    try:
        released = ReleasedGmm.from_dict(serialize.read_json(released_path))
        points, labels = sample_gmm(released, count, seed)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    save_dataset(output, points, labels)
    click.echo(f"wrote {count} synthetic rows to {output}")


@main.command("audit")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--draws", default=100_000, show_default=True,
              type=click.IntRange(min=10_000))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--strict", is_flag=True,
              help="Require the realized weight ratio to stay within eps0.")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_audit(model_path, plan_path, input_path, draws, seed, strict, output):
    """Verify a plan's DP claims; exit nonzero on a hard failure."""
    try:
        model = GmmParams.from_dict(serialize.read_json(model_path))
        built = NoisePlan.from_dict(serialize.read_json(plan_path))
        mode = AdjacencyMode(built.adjacency, clip_bound=built.clip_bound)
        data = _load_clipped_dataset(input_path, model.k, built.clip_bound)
        _check_model_matches(model, data)
        adj = enumerate_adjacency(data, model, mode)
        spec = PrivacySpec(epsilon=built.epsilon, delta=built.delta,
                           lam=max(built.lam, 1e-12), mode=mode)
        report = run_audit(built, adj, spec, draws=draws, seed=seed, strict=strict)
        ledger = verify_ledger(built, adj, spec)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    payload = report.to_dict()
    payload["ledger"] = ledger.to_dict()
    serialize.write_json(output, payload)
    click.echo(
        f"declared eps0 {report.weight_ratio_declared:.6g};"
        f" raw ratio {report.weight_ratio_raw:.6g};"
        f" realized ratio {report.weight_ratio_realized:.6g};"
        f" ledger {'ok' if ledger.passed else 'VIOLATED'}; wrote {output}"
    )
    if report.hard_failure or not ledger.passed:
        raise click.exceptions.Exit(1)


@main.command("experiment")
@click.option("--sweep", "variable", required=True,
              type=click.Choice(["epsilon", "n", "k", "d"]))
@click.option("--grid", required=True,
              help="Comma-separated grid values, e.g. 0.5,1,2,4.")
@click.option("--trials", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_experiment(variable, grid, trials, seed, out_dir):
    """Sweep one knob of the synthetic benchmark; write raw and summary CSVs."""
    try:
        values = [float(v) if variable == "epsilon" else int(v)
                  for v in grid.split(",") if v.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad grid: {exc}")
    try:
        spec = SweepSpec(variable=variable, grid=values, trials=trials, seed=seed)
        summary = run_sweep(spec, out_dir)
    except DpGmmError as exc:
        raise click.ClickException(str(exc))
    for value, mean, half in summary:
        click.echo(f"{variable}={value}: mean KL {mean:.6g} +- {half:.6g}")
    click.echo(f"wrote {out_dir}/raw.csv and {out_dir}/summary.csv")


if __name__ == "__main__":
    main()
