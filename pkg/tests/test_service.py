"""HTTP API, run store round trips and CLI smoke tests."""

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from quakesim.errors import RunStoreError, UnknownRunError
from quakesim.lossengine import run_batch
from quakesim.service.api import create_app
from quakesim.service.store import RunStore


@pytest.fixture(scope="module")
def client(run_config, tmp_path_factory):
    store_root = tmp_path_factory.mktemp("runs")
    app = create_app(run_config, store_root=store_root)
    with TestClient(app) as c:
        yield c


def _scenario_body(**kwargs):
    body = {
        "epicenter": {"lon": -71.3, "lat": 46.9},
        "magnitude": 7.0,
        "seed": 11,
    }
    body.update(kwargs)
    return body


# ---------------------------------------------------------------------------
# health and exposure
# ---------------------------------------------------------------------------

def test_health(client):
    r = client.get("/api/v1/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"
    assert r.json()["n_csds"] == 50


def test_exposure_endpoint(client):
    r = client.get("/api/v1/exposure/E01")
    assert r.status_code == 200
    data = r.json()
    assert data["province"] in ("QC", "ON", "NB")
    assert int(data["total_cents"]) > 0
    assert all(int(c["building_cents"]) >= 0 for c in data["classes"])


def test_exposure_unknown_csd(client):
    r = client.get("/api/v1/exposure/NOPE")
    assert r.status_code == 404
    assert r.json()["code"] == "unknown_csd"


# ---------------------------------------------------------------------------
# scenario endpoint
# ---------------------------------------------------------------------------

def test_scenario_deterministic(client):
    a = client.post("/api/v1/scenario", json=_scenario_body())
    b = client.post("/api/v1/scenario", json=_scenario_body())
    assert a.status_code == 200
    assert a.content == b.content
    data = a.json()
    assert data["event"]["magnitude"] == 7.0
    assert len(data["rings"]["features"]) == data["event"]["n_rings"]
    assert len(data["csd_table"]) > 0


def test_scenario_totals_match_table(client):
    data = client.post("/api/v1/scenario", json=_scenario_body(seed=3)).json()
    by_prov = {}
    for row in data["csd_table"]:
        t = by_prov.setdefault(row["province"], {"loss": 0, "claim": 0})
        t["loss"] += int(row["loss_cents"])
        t["claim"] += int(row["claim_cents"])
    for prov, totals in data["province_totals"].items():
        assert by_prov[prov]["loss"] == int(totals["loss_cents"])
        assert by_prov[prov]["claim"] == int(totals["claim_cents"])


def test_scenario_out_of_window(client):
    r = client.post(
        "/api/v1/scenario",
        json=_scenario_body(epicenter={"lon": 170.0, "lat": 0.0}),
    )
    assert r.status_code == 422
    assert r.json()["code"] == "out_of_window"


def test_scenario_low_magnitude_rejected(client):
    r = client.post("/api/v1/scenario", json=_scenario_body(magnitude=5.5))
    assert r.status_code == 422


def test_scenario_random_magnitude(client):
    r = client.post("/api/v1/scenario", json=_scenario_body(magnitude=None, seed=5))
    assert r.status_code == 200
    assert r.json()["event"]["magnitude"] > 6.0


def test_scenario_east_west_ring_sizes(client):
    east = client.post("/api/v1/scenario", json=_scenario_body()).json()
    west = client.post(
        "/api/v1/scenario",
        json=_scenario_body(epicenter={"lon": -123.0, "lat": 49.4}),
    ).json()
    assert east["event"]["east"] is True
    assert west["event"]["east"] is False
    east_r6 = max(f["properties"]["outer_km"] for f in east["rings"]["features"])
    west_r6 = max(f["properties"]["outer_km"] for f in west["rings"]["features"])
    assert east_r6 > west_r6  # eastern attenuation reaches further per level


def test_scenario_penetration_monotonicity(client):
    base = client.post("/api/v1/scenario", json=_scenario_body(seed=21)).json()
    bumped_body = _scenario_body(
        seed=21,
        insurance_overrides=[
            {"zone": "Montreal Metro", "property_type": "residential",
             "penetration": 0.95, "deductible": 0.05, "limit": 1.0},
            {"zone": "Rest of QC", "property_type": "residential",
             "penetration": 0.95, "deductible": 0.05, "limit": 1.0},
        ],
    )
    bumped = client.post("/api/v1/scenario", json=bumped_body).json()
    for prov, totals in base["province_totals"].items():
        assert int(bumped["province_totals"][prov]["loss_cents"]) == int(totals["loss_cents"])
        assert int(bumped["province_totals"][prov]["claim_cents"]) >= int(totals["claim_cents"])


# ---------------------------------------------------------------------------
# batch + polling + mct
# ---------------------------------------------------------------------------

def _wait_for(client, run_id, timeout=120.0):
    start = time.time()
    while time.time() - start < timeout:
        r = client.get(f"/api/v1/batch/{run_id}")
        assert r.status_code == 200
        data = r.json()
        if data["status"] in ("done", "failed"):
            return data
        assert data["status"] in ("queued", "running")
        assert 0.0 <= data["progress"] <= 1.0
        time.sleep(0.1)
    raise TimeoutError(f"batch {run_id} did not finish")


def test_batch_lifecycle(client):
    r = client.post("/api/v1/batch", json={"n_years": 40, "seed": 9, "run_id": "t-life"})
    assert r.status_code == 200
    assert r.json()["status"] == "queued"
    final = _wait_for(client, "t-life")
    assert final["status"] == "done"

    dup = client.post("/api/v1/batch", json={"n_years": 40, "seed": 9, "run_id": "t-life"})
    assert dup.status_code == 409

    mct = client.get("/api/v1/batch/t-life/mct", params={"epsilon": [1 / 20, 1 / 40]})
    assert mct.status_code == 200
    reports = mct.json()["reports"]
    assert len(reports) == 2
    from quakesim.evt import osfi_mct

    for report in reports:
        assert int(report["osfi_cents"]) >= 0
        assert report["pearson_cents"] is not None
        assert report["kendall_cents"] is not None
        # internal consistency: the OSFI field is the aggregate of the report's
        # own east/west figures (up to the cent conversion)
        east = int(report["east_pml_cents"]) / 100.0
        west = int(report["west_pml_cents"]) / 100.0
        assert abs(int(report["osfi_cents"]) / 100.0 - osfi_mct(east, west)) <= 0.02
    # PML monotone as epsilon decreases (longer return period)
    assert int(reports[1]["total_pml_cents"]) >= int(reports[0]["total_pml_cents"])


def test_batch_unknown_run(client):
    r = client.get("/api/v1/batch/missing-run")
    assert r.status_code == 404
    r = client.get("/api/v1/batch/missing-run/mct")
    assert r.status_code == 404


def test_validation_error_shape(client):
    r = client.post("/api/v1/scenario", json={"epicenter": {"lon": "x", "lat": 1}})
    assert r.status_code == 422
    body = r.json()
    assert set(body) == {"code", "message", "details"}


# ---------------------------------------------------------------------------
# shipped JSON schemas
# ---------------------------------------------------------------------------

def _schema(name):
    from importlib import resources

    ref = resources.files("quakesim.service") / "schemas" / name
    return json.loads(ref.read_text())


def test_scenario_response_matches_shipped_schema(client):
    import jsonschema

    response = client.post("/api/v1/scenario", json=_scenario_body(seed=33)).json()
    jsonschema.validate(response, _schema("scenario_response.schema.json"))


def test_error_and_status_match_shipped_schemas(client):
    import jsonschema

    error = client.get("/api/v1/exposure/NOPE").json()
    jsonschema.validate(error, _schema("error.schema.json"))

    client.post("/api/v1/batch", json={"n_years": 2, "seed": 17, "run_id": "t-schema"})
    status = _wait_for(client, "t-schema")
    jsonschema.validate(status, _schema("batch_status.schema.json"))


# ---------------------------------------------------------------------------
# run store
# ---------------------------------------------------------------------------

def test_store_roundtrip(run_inputs, run_config, tmp_path):
    from quakesim.exposure import to_cents

    run = run_batch(15, seed=3, config=run_config.engine_config(), inputs=run_inputs)
    store = RunStore(tmp_path / "store")
    store.save(run)
    assert store.has_run(run.run_id)
    manifest = store.load_manifest(run.run_id)
    assert manifest["n_years"] == 15
    series, n_years = store.load_annual_series(run.run_id)
    assert n_years == 15
    # exact integer-cent round trip through the 2-decimal CSV
    for prov in run.annual.provinces:
        for i, year in enumerate(run.annual.years):
            assert to_cents(series[prov][i]) == run.annual.loss[year].get(prov, 0)


def test_store_detects_tampering(run_inputs, run_config, tmp_path):
    run = run_batch(5, seed=4, config=run_config.engine_config(), inputs=run_inputs)
    store = RunStore(tmp_path / "store")
    rundir = store.save(run)
    annual = rundir / "annual.csv"
    annual.write_text(annual.read_text() + "tampered\n")
    with pytest.raises(RunStoreError):
        store.load_manifest(run.run_id)


def test_store_unknown_run(tmp_path):
    store = RunStore(tmp_path / "store")
    with pytest.raises(UnknownRunError):
        store.load_manifest("ghost")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_simulate_and_mct(fixture_dir, tmp_path):
    from click.testing import CliRunner

    from quakesim.service.cli import main

    runner = CliRunner()
    out = tmp_path / "runs"
    r = runner.invoke(
        main,
        ["simulate", "--config", str(fixture_dir / "config.json"), "--years", "20",
         "--seed", "5", "--run-id", "cli-run", "--out", str(out)],
    )
    assert r.exit_code == 0, r.output
    assert (out / "cli-run" / "annual.csv").exists()
    manifest = json.loads((out / "cli-run" / "manifest.json").read_text())
    assert set(manifest["inputs"]) == {
        "window", "hazard_grid", "csd_geojson", "exposure", "dpm", "terms",
        "zone_map", "catalog",
    }

    table = tmp_path / "pml.csv"
    r = runner.invoke(
        main,
        ["evt", "--run", str(out), "--run-id", "cli-run", "--x", "5", "--x", "10",
         "--out", str(table)],
    )
    assert r.exit_code == 0, r.output
    lines = table.read_text().strip().splitlines()
    assert lines[0].startswith("kind,x,NL,PE,NS,NB,QC,ON,MB,SK,BC,YT,NT,AB,NU,East,West,OSFI")
    assert len(lines) == 1 + 4  # simulated + estimated rows for two x values

    r = runner.invoke(
        main, ["mct", "--run", str(out), "--run-id", "cli-run", "--epsilon", "0.1"]
    )
    assert r.exit_code == 0, r.output
    data = json.loads(r.output)
    assert data["reports"][0]["osfi"] >= 0.0


def test_cli_scenario(fixture_dir, tmp_path):
    from click.testing import CliRunner

    from quakesim.service.cli import main

    runner = CliRunner()
    out = tmp_path / "scenario.json"
    r = runner.invoke(
        main,
        ["scenario", "--config", str(fixture_dir / "config.json"), "--lon", "-71.4",
         "--lat", "47.0", "--magnitude", "6.8", "--seed", "2", "--out", str(out)],
    )
    assert r.exit_code == 0, r.output
    data = json.loads(out.read_text())
    assert data["event"]["magnitude"] == 6.8


def test_cli_fit_and_residuals(fixture_dir, tmp_path):
    from click.testing import CliRunner

    from quakesim.service.cli import main

    runner = CliRunner()
    r = runner.invoke(main, ["fit", "--config", str(fixture_dir / "config.json")])
    assert r.exit_code == 0, r.output
    data = json.loads(r.output)
    assert data["n_events"] == 120
    assert data["spatial_bandwidth"] > 0

    outdir = tmp_path / "resid"
    r = runner.invoke(
        main,
        ["residuals", "--config", str(fixture_dir / "config.json"), "--kind", "raw",
         "--model", "P", "--out", str(outdir)],
    )
    assert r.exit_code == 0, r.output
    assert (outdir / "residuals_raw.csv").exists()
    summary = json.loads((outdir / "residuals_raw_summary.json").read_text())
    assert summary["n_cells"] == 120
