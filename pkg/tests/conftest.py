"""Session-scoped preset runs shared by the acceptance tests.

Each preset scenario is simulated once per session through the same code
path the CLI uses, so the acceptance criteria all judge genuine end-to-end
artifacts (CSV files plus report.json).
"""

from pathlib import Path

import numpy as np
import pytest

from qsync.cli import read_trajectory_csv, run_scenario, scenario_from_preset


class PresetRun:
    def __init__(self, outdir: Path, report: dict):
        self.outdir = outdir
        self.report = report
        times, names, values = read_trajectory_csv(outdir / "trajectory.csv")
        self.times = times
        self.names = names
        self.values = values

    def column(self, name: str) -> np.ndarray:
        if name not in self.names:
            raise KeyError(name)
        return self.values[:, self.names.index(name)]

    @property
    def mutual_info_final(self):
        return self.report["mutual_info_final"]


def _run_preset(tmp_path_factory, name: str) -> PresetRun:
    outdir = tmp_path_factory.mktemp(f"run_{name}")
    report = run_scenario(scenario_from_preset(name), outdir)
    return PresetRun(outdir, report)


@pytest.fixture(scope="session")
def fig2a_run(tmp_path_factory):
    return _run_preset(tmp_path_factory, "fig2a")


@pytest.fixture(scope="session")
def fig2b_run(tmp_path_factory):
    return _run_preset(tmp_path_factory, "fig2b")


@pytest.fixture(scope="session")
def fig2c_run(tmp_path_factory):
    return _run_preset(tmp_path_factory, "fig2c")


@pytest.fixture(scope="session")
def fig3_run(tmp_path_factory):
    return _run_preset(tmp_path_factory, "fig3")
