"""Run persistence: artifacts first, manifest last, digests verified on load."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import RunStoreError, UnknownRunError
from ..exposure import PROVINCES
from ..lossengine import (
    SimulationRun,
    file_digest,
    write_annual_csv,
    write_events_csv,
    write_manifest,
)


class RunStore:
    """Directory of runs; a run is valid only once its manifest exists."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def has_run(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "manifest.json").exists()

    def list_runs(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "manifest.json").exists())

    def save(self, run: SimulationRun, input_digests: dict[str, str] | None = None) -> Path:
        rundir = self.run_dir(run.run_id)
        rundir.mkdir(parents=True, exist_ok=True)
        annual = rundir / "annual.csv"
        events = rundir / "events.csv"
        write_annual_csv(run, annual)
        write_events_csv(run, events)
        write_manifest(
            run,
            {"annual.csv": annual, "events.csv": events},
            rundir / "manifest.json",
            input_digests,
        )
        return rundir

    def load_manifest(self, run_id: str) -> dict:
        rundir = self.run_dir(run_id)
        manifest_path = rundir / "manifest.json"
        if not manifest_path.exists():
            raise UnknownRunError(f"no run {run_id!r}")
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        for name, digest in manifest.get("artifacts", {}).items():
            artifact = rundir / name
            if not artifact.exists():
                raise RunStoreError(f"artifact {name} missing for run {run_id}")
            if file_digest(artifact) != digest:
                raise RunStoreError(f"artifact {name} digest mismatch for run {run_id}")
        return manifest

    def load_annual_series(
        self, run_id: str, source: str = "loss"
    ) -> tuple[dict[str, np.ndarray], int]:
        """Per-province annual series (CAD) for all 13 provinces, zeros for
        provinces outside the run's exposure."""
        manifest = self.load_manifest(run_id)
        n_years = int(manifest["n_years"])
        column = "loss_cad" if source == "loss" else "claim_cad"
        series = {prov: np.zeros(n_years) for prov in PROVINCES}
        with open(self.run_dir(run_id) / "annual.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                year = int(row["year"])
                prov = row["province"]
                series[prov][year - 1] = float(row[column])
        return series, n_years
