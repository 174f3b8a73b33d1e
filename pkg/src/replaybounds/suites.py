"""Named experiment suites used by the acceptance checks and shipped as JSON configs."""
from __future__ import annotations

import copy

# 2-D rotating Gaussians; well separated so buffer-free cells are close to interpolating
DESK_DATA = {"generator": "synthetic", "T": 5, "dim": 2, "class_sep": 6.0, "rotation_per_task": 0.6}

# 64 supersample blocks x 4 runs = 256 runs per cell
DESK_ESTIMATION = {"blocks": 64, "runs_per_block": 4}

# cells whose empirical risk is at most this count as interpolating-regime cells
INTERPOLATING_RISK = 0.01


def default_sweep() -> dict:
    return {
        "version": 1,
        "base": {"data": dict(DESK_DATA), "estimation": dict(DESK_ESTIMATION)},
        "axes": {"data.n": [50, 100, 200, 400], "buffer.m": [0, 4, 16, 64]},
    }


def separable_base() -> dict:
    """High-dimensional tasks where linear training reaches zero training error on every run."""
    return {
        "version": 1,
        "data": {"generator": "synthetic", "T": 3, "n": 20, "dim": 50, "class_sep": 3.0, "rotation_per_task": 0.3},
        "buffer": {"m": 4},
        "model": {"surrogate_clip": 50.0},
        "optimizer": {"eta": 2.0, "steps_per_task": 200, "batch_current": 20, "batch_buffer": [2, 8]},
        "estimation": dict(DESK_ESTIMATION),
    }


def separable_sweep() -> dict:
    base = separable_base()
    base.pop("version")
    return {"version": 1, "base": base, "axes": {"buffer.m": [2, 16]}}


# (eta, theta) pairs; the noise scale is xi = theta * SGLD_XI_UNIT
SGLD_SETTINGS = ((0.05, 6.0), (0.01, 8.0), (0.005, 9.0))
SGLD_XI_UNIT = 1e-3


def sgld_sweep() -> dict:
    return {
        "version": 1,
        "base": {
            "data": dict(DESK_DATA, n=50),
            "buffer": {"m": 16},
            "optimizer": {"kind": "sgld", "probe": True, "m_probes": 16, "steps_per_task": 100},
            "estimation": {"blocks": 8, "runs_per_block": 4},
        },
        "zip": {"optimizer.eta": [e for e, _ in SGLD_SETTINGS],
                "optimizer.xi": [t * SGLD_XI_UNIT for _, t in SGLD_SETTINGS]},
    }


LABEL_NOISE = (0.03, 0.06, 0.09)


def label_noise_sweep() -> dict:
    # 20-D tasks give the linear model enough room to fit flipped labels, so the gap responds to noise
    return {
        "version": 1,
        "base": {"data": dict(DESK_DATA, n=50, dim=20, class_sep=3.0), "buffer": {"m": 16},
                 "estimation": dict(DESK_ESTIMATION)},
        "axes": {"data.delta": list(LABEL_NOISE)},
    }


def smoke_config() -> dict:
    return {
        "version": 1,
        "data": dict(DESK_DATA, T=3, n=20),
        "buffer": {"m": 4},
        "optimizer": {"steps_per_task": 20},
        "estimation": {"blocks": 4, "runs_per_block": 2, "bootstrap": 8},
    }


SUITES = {
    "default_sweep": default_sweep,
    "separable_sweep": separable_sweep,
    "sgld_sweep": sgld_sweep,
    "label_noise_sweep": label_noise_sweep,
    "smoke": smoke_config,
}


def get(name: str) -> dict:
    return copy.deepcopy(SUITES[name]())
