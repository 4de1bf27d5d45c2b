"""Figure generation from benchmark output directories.

Everything here works off the files alone: trajectory_<j>.csv,
iterations.csv, cert_<j>.json, and config.json.  Set polynomials are
evaluated on dense grids for zero-level contours; no solver code is
imported.  Rendering is deterministic for fixed inputs (Agg backend,
fixed figure geometry, no timestamps in the output files).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# boundary color convention: target green, safe set black, certified set cyan
COLOR_TARGET = "tab:green"
COLOR_SAFE = "black"
COLOR_CERT = "cyan"


class MissingColumn(ValueError):
    pass


@dataclass
class PlotSpec:
    input_dir: Path
    kind: str                    # "phase2d", "traj3d", or "costs"
    output: Path
    iterations: list[int] | None = None   # None = all on disk

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output = Path(self.output)
        if self.kind not in ("phase2d", "traj3d", "costs"):
            raise ValueError(f"unknown figure kind '{self.kind}'")


def poly_eval_grid(poly: dict, X: np.ndarray, Y: np.ndarray,
                   z_fixed: float | None = None) -> np.ndarray:
    """Evaluate a serialized polynomial on a 2-d mesh (third variable fixed)."""
    out = np.zeros_like(X)
    for term in poly["terms"]:
        exp = term["exp"]
        val = term["coef"] * X ** exp[0] * Y ** exp[1]
        if len(exp) > 2:
            if z_fixed is None:
                raise ValueError("3-variable polynomial needs a fixed slice")
            val = val * z_fixed ** exp[2]
        out += val
    return out


def load_trajectory(path: Path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise MissingColumn(f"{path} has no data rows")
    state_cols = sorted(c for c in rows[0] if c.startswith("x_"))
    if not state_cols:
        raise MissingColumn(f"{path} carries no state columns x_*")
    pts = np.array([[float(r[c]) for c in state_cols] for r in rows])
    return pts


def trajectory_files(spec: PlotSpec):
    files = {}
    for p in sorted(spec.input_dir.glob("trajectory_*.csv")):
        try:
            j = int(p.stem.split("_")[1])
        except (IndexError, ValueError):
            continue
        files[j] = p
    if spec.iterations is not None:
        files = {j: p for j, p in files.items() if j in spec.iterations}
    return dict(sorted(files.items()))


def _load_sets(spec: PlotSpec):
    cfg_path = spec.input_dir / "config.json"
    if not cfg_path.exists():
        return None
    with open(cfg_path) as fh:
        return json.load(fh)


def _grid_from_box(box, n=400):
    xs = np.linspace(box[0][0], box[0][1], n)
    ys = np.linspace(box[1][0], box[1][1], n)
    return np.meshgrid(xs, ys)


def _set_box(cfg):
    """Plot window from the safe set's quadratic when available."""
    poly = cfg["safe_set"]
    nvars = poly["nvars"]
    quad = np.zeros(nvars)
    const = 0.0
    for term in poly["terms"]:
        exp = term["exp"]
        if sum(exp) == 0:
            const = term["coef"]
        elif sum(exp) == 2 and max(exp) == 2:
            quad[exp.index(2)] = term["coef"]
    if const < 0 and np.all(quad > 0):
        half = 1.15 * np.sqrt(-const / quad)
        return [(-half[i], half[i]) for i in range(nvars)]
    return [(-1.0, 1.0)] * nvars


def render(spec: PlotSpec) -> Path:
    """Produce the requested figure; returns the written path."""
    if spec.kind == "costs":
        fig = _render_costs(spec)
    elif spec.kind == "phase2d":
        fig = _render_phase2d(spec)
    else:
        fig = _render_traj3d(spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=150, metadata=_stable_metadata(spec.output))
    plt.close(fig)
    return spec.output


def _stable_metadata(path: Path):
    # strip timestamps so identical inputs give identical bytes
    if path.suffix.lower() == ".png":
        return {"Software": "raplot"}
    if path.suffix.lower() == ".svg":
        return {"Date": None}
    return None


def _render_costs(spec: PlotSpec):
    path = spec.input_dir / "iterations.csv"
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "cost" not in rows[0] or "j" not in rows[0]:
        raise MissingColumn(f"{path} lacks the j/cost columns")
    js = [int(r["j"]) for r in rows]
    costs = [float(r["cost"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(js, costs, marker="o", color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel("episode cost")
    ax.set_xticks(js)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def _render_phase2d(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(5, 5))
    cfg = _load_sets(spec)
    if cfg is not None:
        box = _set_box(cfg)
        X, Y = _grid_from_box(box[:2])
        ax.contour(X, Y, poly_eval_grid(cfg["target_set"], X, Y, 0.0),
                   levels=[0.0], colors=[COLOR_TARGET])
        ax.contour(X, Y, poly_eval_grid(cfg["safe_set"], X, Y, 0.0),
                   levels=[0.0], colors=[COLOR_SAFE])
        cert = spec.input_dir / "cert_0.json"
        if cert.exists():
            with open(cert) as fh:
                v = json.load(fh)["v"]
            ax.contour(X, Y, poly_eval_grid(v, X, Y, 0.0), levels=[0.0],
                       colors=[COLOR_CERT])
    styles = ["tab:blue", "tab:orange", "tab:red", "tab:purple", "tab:brown"]
    for j, path in trajectory_files(spec).items():
        pts = load_trajectory(path)
        ax.plot(pts[:, 0], pts[:, 1], color=styles[j % len(styles)],
                linewidth=1.2, label=f"iteration {j}")
        ax.plot(pts[0, 0], pts[0, 1], marker="s",
                color=styles[j % len(styles)], markersize=4)
    if trajectory_files(spec):
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    fig.tight_layout()
    return fig


def _render_traj3d(spec: PlotSpec):
    fig = plt.figure(figsize=(5.5, 5))
    ax = fig.add_subplot(projection="3d")
    styles = ["tab:blue", "tab:orange", "tab:red", "tab:purple", "tab:brown"]
    any_traj = False
    for j, path in trajectory_files(spec).items():
        pts = load_trajectory(path)
        if pts.shape[1] < 3:
            raise MissingColumn(f"{path} has fewer than 3 state columns")
        ax.plot(pts[:, 0], pts[:, 1], pts[:, 2],
                color=styles[j % len(styles)], linewidth=1.2,
                label=f"iteration {j}")
        any_traj = True
    cfg = _load_sets(spec)
    if cfg is not None:
        # translucent target-set sphere when the target is a centered ball
        quad = np.zeros(3)
        const = 0.0
        for term in cfg["target_set"]["terms"]:
            exp = term["exp"]
            if sum(exp) == 0:
                const = term["coef"]
            elif sum(exp) == 2 and max(exp) == 2:
                quad[exp.index(2)] = term["coef"]
        if const < 0 and np.all(quad > 0):
            r = np.sqrt(-const / quad)
            u, w = np.meshgrid(np.linspace(0, 2 * np.pi, 40),
                               np.linspace(0, np.pi, 20))
            ax.plot_surface(r[0] * np.cos(u) * np.sin(w),
                            r[1] * np.sin(u) * np.sin(w),
                            r[2] * np.cos(w), color=COLOR_TARGET, alpha=0.25,
                            linewidth=0)
    if any_traj:
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_zlabel("x3")
    fig.tight_layout()
    return fig
