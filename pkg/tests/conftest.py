"""Shared fixtures: expensive synthesis artifacts are built once per session."""

import numpy as np
import pytest

from rampc import examples
from rampc.closed_loop import fit_linear
from rampc.gbf import synthesize


@pytest.fixture(scope="session")
def ex1_barrier():
    cfg = examples.get("ex1")
    traj = cfg.initial_trajectory()
    ctl = fit_linear(traj, cfg.control_lower, cfg.control_upper)
    return synthesize(cfg.system, ctl, cfg.regions, cfg.lam, cfg.M, cfg.x0,
                      degrees=cfg.deg_v_ladder, deg_s_main=cfg.deg_s_main,
                      deg_s_side=cfg.deg_s_side)
