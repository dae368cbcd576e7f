"""Command line interface: fit, residuals, simulate, scenario, evt, mct, serve."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click

from ..evt import build_mct_report
from ..exposure import PROVINCES
from ..fixtures import make_desk_fixture
from ..geo import GeoPoint
from ..lossengine import run_batch, summarize_run
from ..residuals import (
    l_test,
    n_test,
    residuals_summary_json,
    residuals_to_csv,
    voronoi_deviance,
    voronoi_pearson,
    voronoi_raw,
)
from ..stpp import fit_homogeneous, fit_kernel_model, load_catalog_csv, silverman_bandwidth
from .config import assemble_inputs, load_config
from .scenario import ScenarioRequest, run_scenario
from .store import RunStore


@click.group()
def main():
    """Earthquake catalog simulation and insurance loss aggregation."""


def _load(config_path):
    config = load_config(config_path)
    return config, assemble_inputs(config)


@main.command()
@click.option("--out", type=click.Path(), required=True, help="fixture output directory")
def fixture(out):
    """Generate the synthetic desk fixture (inputs + config.json)."""
    make_desk_fixture(out)
    click.echo(f"fixture written to {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(["lcv", "mse"]), default="lcv")
@click.option("--out", type=click.Path(), default=None)
def fit(config_path, method, out):
    """Fit the homogeneous and kernel intensity models to the catalog."""
    config = load_config(config_path)
    from ..geo import load_window

    window = load_window(config.path("window"))
    pattern = load_catalog_csv(config.path("catalog"), window)
    homogeneous = fit_homogeneous(pattern)
    kernel = fit_kernel_model(pattern, method=method)
    result = {
        "n_events": pattern.n,
        "period": list(pattern.period),
        "window_area": window.area,
        "homogeneous_rate": homogeneous.spatial.rate,
        "bandwidth_method": method,
        "spatial_bandwidth": kernel.spatial.bandwidth_h,
        "temporal_bandwidth": silverman_bandwidth(pattern.years()),
    }
    click.echo(json.dumps(result, indent=2))
    if out:
        Path(out).write_text(json.dumps(result, indent=2))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["raw", "pearson", "deviance"]), default="raw")
@click.option("--model", "model_kind", type=click.Choice(["P", "H"]), default="H",
              help="model for raw/pearson residuals; deviance compares H vs P")
@click.option("--bandwidth", type=float, default=None)
@click.option("--tests/--no-tests", default=False, help="also run the N- and L-tests")
@click.option("--simulations", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True, help="output directory")
def residuals(config_path, kind, model_kind, bandwidth, tests, simulations, seed, out):
    """Voronoi residual diagnostics for the catalog fit."""
    config = load_config(config_path)
    from ..geo import load_window

    window = load_window(config.path("window"))
    pattern = load_catalog_csv(config.path("catalog"), window)
    homogeneous = fit_homogeneous(pattern)
    kernel = fit_kernel_model(pattern, h=bandwidth or config.raw.get("model", {}).get("bandwidth"))

    if kind == "deviance":
        resset = voronoi_deviance(pattern, kernel, homogeneous)
    else:
        model = kernel if model_kind == "H" else homogeneous
        resset = (voronoi_raw if kind == "raw" else voronoi_pearson)(pattern, model)

    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    residuals_to_csv(resset, outdir / f"residuals_{kind}.csv")
    summary = residuals_summary_json(resset, outdir / f"residuals_{kind}_summary.json")
    click.echo(json.dumps(summary, indent=2))

    if tests:
        model = kernel if model_kind == "H" else homogeneous
        nfrac = n_test(pattern, model, simulations, seed)
        lfrac = l_test(pattern, model, simulations, seed)
        click.echo(f"N-test fraction: {nfrac:.3f}")
        click.echo(f"L-test fraction: {lfrac:.3f}")
        click.echo(
            "convention: reject when a fraction falls outside [0.025, 0.975] "
            "(two-sided 0.05 rule); the L-test rejects only near 0"
        )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--years", type=int, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--run-id", type=str, default=None)
@click.option("--out", type=click.Path(), required=True, help="run store directory")
def simulate(config_path, years, seed, run_id, out):
    """Run a multi-year batch and persist annual.csv/events.csv/manifest.json."""
    config, inputs = _load(config_path)
    if seed is None:
        seed = config.default_seed
    run = run_batch(years, seed, config.engine_config(), inputs, run_id=run_id)
    store = RunStore(out)
    rundir = store.save(run, config.input_digests())
    click.echo(f"run {run.run_id}: {sum(run.annual.n_events.values())} events, "
               f"{run.discarded_events} discarded, artifacts in {rundir}")
    for k, pct_events, pct_damaging in summarize_run(run):
        click.echo(f"  {k} events: {pct_events:6.3f}% of years | damaging: {pct_damaging:6.3f}%")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--lon", type=float, required=True)
@click.option("--lat", type=float, required=True)
@click.option("--magnitude", type=str, default="random",
              help='moment magnitude > 6, or "random"')
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
def scenario(config_path, lon, lat, magnitude, seed, out):
    """Simulate one earthquake at a chosen epicenter."""
    config, inputs = _load(config_path)
    mag = None if magnitude == "random" else float(magnitude)
    req = ScenarioRequest(epicenter=GeoPoint(lon, lat), magnitude=mag, seed=seed)
    response = run_scenario(inputs, config.engine_config(), req)
    text = json.dumps(response, indent=2)
    if out:
        Path(out).write_text(text)
        click.echo(f"scenario written to {out}")
    else:
        click.echo(text)


def _pml_table_rows(store: RunStore, run_id: str, xs, source: str):
    series, n_years = store.load_annual_series(run_id, source)
    rows = []
    for kind in ("simulated", "estimated"):
        for x in xs:
            report = build_mct_report(series, n_years, 1.0 / x)
            values = report.simulated if kind == "simulated" else {
                prov: (report.estimated[prov] if report.estimated[prov] is not None else 0.0)
                for prov in report.provinces
            }
            row = {"kind": kind, "x": x}
            for prov in PROVINCES:
                row[prov] = values.get(prov, 0.0)
            row["East"] = report.east_pml
            row["West"] = report.west_pml
            row["OSFI"] = report.osfi_value
            row["Pearson"] = report.corr_value_pearson
            row["Kendall"] = report.corr_value_kendall
            rows.append(row)
    return rows


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True,
              help="run store directory")
@click.option("--run-id", type=str, required=True)
@click.option("--x", "xs", type=int, multiple=True, default=(100, 250, 500, 750, 1000),
              help="return periods (1/x years)")
@click.option("--source", type=click.Choice(["loss", "claim"]), default="loss")
@click.option("--out", type=click.Path(), required=True)
def evt(run_dir, run_id, xs, source, out):
    """PML table (per province, East/West, OSFI and correlation aggregates)."""
    store = RunStore(run_dir)
    rows = _pml_table_rows(store, run_id, xs, source)
    header = ["kind", "x", *PROVINCES, "East", "West", "OSFI", "Pearson", "Kendall"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
    click.echo(f"PML table written to {out}")


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--run-id", type=str, required=True)
@click.option("--epsilon", "epsilons", type=float, multiple=True, default=(1.0 / 500.0,))
@click.option("--source", type=click.Choice(["loss", "claim"]), default="loss")
@click.option("--out", type=click.Path(), default=None)
def mct(run_dir, run_id, epsilons, source, out):
    """Country-wide MCT report for a stored run."""
    store = RunStore(run_dir)
    series, n_years = store.load_annual_series(run_id, source)
    reports = []
    for eps in epsilons:
        report = build_mct_report(series, n_years, eps)
        reports.append(
            {
                "epsilon": eps,
                "east_pml": report.east_pml,
                "west_pml": report.west_pml,
                "total_pml": report.total_pml,
                "osfi": report.osfi_value,
                "pearson": report.corr_value_pearson,
                "kendall": report.corr_value_kendall,
                "simulated_pml": report.simulated,
                "estimated_pml": report.estimated,
            }
        )
    text = json.dumps({"run_id": run_id, "source": source, "reports": reports}, indent=2)
    if out:
        Path(out).write_text(text)
        click.echo(f"MCT report written to {out}")
    else:
        click.echo(text)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8000)
@click.option("--host", type=str, default="127.0.0.1")
def serve(config_path, port, host):
    """Start the HTTP API."""
    import uvicorn

    from .api import create_app

    config = load_config(config_path)
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
