"""Rendering against synthetic output directories (schema fixtures)."""

import csv
import json
import math
from pathlib import Path

import pytest

from raplot import MissingColumn, PlotSpec, render
from raplot.cli import main


def write_trajectory(path: Path, j: int, states, controls_dim=1):
    n = len(states[0])
    header = (["iter", "t"] + [f"x_{i+1}" for i in range(n)]
              + [f"u_{i+1}" for i in range(controls_dim)] + ["stage_cost"])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for t, s in enumerate(states[:-1]):
            wr.writerow([j, t, *s, *([0.1] * controls_dim), 1.0])
        wr.writerow([j, len(states) - 1, *states[-1],
                     *([""] * controls_dim), ""])


def ball(nvars, radius_sq, coeffs=None):
    terms = []
    for i in range(nvars):
        e = [0] * nvars
        e[i] = 2
        terms.append({"exp": e, "coef": 1.0 if coeffs is None else coeffs[i]})
    terms.append({"exp": [0] * nvars, "coef": -radius_sq})
    return {"nvars": nvars, "terms": terms}


@pytest.fixture
def run2d(tmp_path):
    d = tmp_path / "run"
    d.mkdir()
    spiral = [(2.0 * math.exp(-0.1 * t) * math.cos(0.4 * t),
               2.0 * math.exp(-0.1 * t) * math.sin(0.4 * t))
              for t in range(40)]
    write_trajectory(d / "trajectory_0.csv", 0, spiral)
    write_trajectory(d / "trajectory_1.csv", 1, spiral[::2])
    with open(d / "iterations.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j", "cost", "episode_len", "delta_star", "t_interp_s",
                     "t_gbf_s", "t_surrogate_s", "t_mpc_s"])
        for j, c in enumerate([64.3, 31.0, 29.3]):
            wr.writerow([j, c, 40, 0.5, 0, 0, 0, 0])
    cfg = {"safe_set": ball(2, 1.0, [0.25, 0.25]),
           "target_set": ball(2, 0.04),
           "outer_set": ball(2, 2.0, [0.25, 0.25])}
    (d / "config.json").write_text(json.dumps(cfg))
    cert = {"lambda": 1.001, "M": 1.0,
            "v": {"nvars": 2, "terms": [{"exp": [0, 0], "coef": 0.5},
                                        {"exp": [2, 0], "coef": -0.2},
                                        {"exp": [0, 2], "coef": -0.2}]},
            "multipliers": [], "x0": [1.2, 1.0]}
    (d / "cert_0.json").write_text(json.dumps(cert))
    return d


@pytest.fixture
def run3d(tmp_path):
    d = tmp_path / "run3d"
    d.mkdir()
    helix = [(0.3 * math.cos(0.3 * t), 0.3 * math.sin(0.3 * t),
              0.2 * math.exp(-0.05 * t)) for t in range(50)]
    write_trajectory(d / "trajectory_0.csv", 0, helix)
    cfg = {"safe_set": ball(3, 0.25), "target_set": ball(3, 0.01),
           "outer_set": ball(3, 0.5)}
    (d / "config.json").write_text(json.dumps(cfg))
    return d


class TestRender:
    def test_phase2d(self, run2d, tmp_path):
        out = render(PlotSpec(run2d, "phase2d", tmp_path / "p.png"))
        assert out.exists() and out.stat().st_size > 2000

    def test_costs(self, run2d, tmp_path):
        out = render(PlotSpec(run2d, "costs", tmp_path / "c.png"))
        assert out.exists()

    def test_traj3d(self, run3d, tmp_path):
        out = render(PlotSpec(run3d, "traj3d", tmp_path / "t.png"))
        assert out.exists()

    def test_iteration_filter_and_empty_overlay(self, run2d, tmp_path):
        out = render(PlotSpec(run2d, "phase2d", tmp_path / "none.png",
                              iterations=[]))
        assert out.exists()   # boundaries only

    def test_deterministic_bytes(self, run2d, tmp_path):
        a = render(PlotSpec(run2d, "phase2d", tmp_path / "a.png"))
        b = render(PlotSpec(run2d, "phase2d", tmp_path / "b.png"))
        assert a.read_bytes() == b.read_bytes()

    def test_missing_column_is_descriptive(self, tmp_path):
        d = tmp_path / "broken"
        d.mkdir()
        (d / "trajectory_0.csv").write_text("iter,t,foo\n0,0,1\n")
        with pytest.raises(MissingColumn, match="x_"):
            render(PlotSpec(d, "phase2d", tmp_path / "x.png"))

    def test_svg_output(self, run2d, tmp_path):
        out = render(PlotSpec(run2d, "costs", tmp_path / "c.svg"))
        assert out.read_bytes().startswith(b"<?xml")


class TestCli:
    def test_ok(self, run2d, tmp_path):
        assert main(["costs", str(run2d), "--out",
                     str(tmp_path / "c.png")]) == 0

    def test_missing_inputs_exit_one(self, tmp_path):
        assert main(["costs", str(tmp_path), "--out",
                     str(tmp_path / "c.png")]) == 1

    def test_iteration_selection(self, run2d, tmp_path):
        assert main(["phase2d", str(run2d), "--out",
                     str(tmp_path / "p.png"), "--iterations", "0"]) == 0
