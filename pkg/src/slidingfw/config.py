"""Run configuration: INI sections whose values are JSON literals.

Example::

    [kernel]
    variant = "astigmatism"
    n_planes = 2

    [solver]
    lam_factor = 0.6

Every key has a default except ``kernel.variant``, which a config file
must set. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import copy
import io
import json
import math
from pathlib import Path

import numpy as np

from .kernels import (
    Astigmatism,
    ContinuousLaplace,
    DoubleHelix,
    Gaussian1D,
    MaTirf,
    Optics,
    SampledLaplace,
)
from .solvers import DescentConfig, LassoConfig


class ConfigError(ValueError):
    """Invalid, missing or unknown configuration entry."""


VARIANTS = (
    "gaussian1d", "laplace", "laplace_normalized", "continuous_laplace",
    "continuous_laplace_normalized", "astigmatism", "double_helix", "ma_tirf",
)
MICROSCOPY = ("astigmatism", "double_helix", "ma_tirf")

REQUIRED = {("kernel", "variant")}

DEFAULTS: dict[str, dict] = {
    "run": {"seed": 0, "out_dir": "out", "threads": None},
    "kernel": {
        "variant": "astigmatism",
        "n_planes": 4,
        # optics
        "b1": 6.4, "b2": 6.4, "b3": 0.8, "n1": 64, "n2": 64,
        "na": 1.49, "n_i": 1.515, "n_t": 1.333, "wavelength": 0.66,
        # null -> 0.42 wavelength / NA for 3-D, 0.05 for gaussian1d
        "sigma": None,
        "alpha": -0.79, "beta": 0.2, "dof": None, "focal_depths": None,
        "omega": 1.0, "theta_speed": 0.3846 * math.pi,
        "sqrt_depth": False,
        # 1-D kernels
        "n_samples": 100, "s_max": 10.0, "lower": None, "upper": None,
    },
    "solver": {
        "lam": None, "lam_factor": 1.0, "positive": True, "max_outer": 100,
        "grid": None, "stop_tol": 1e-9,
        "lasso_max_iter": 20000, "lasso_tol": 1e-10,
        "descent_max_iter": 500, "descent_grad_tol": 1e-9, "descent_memory": 10,
    },
    "noise": {"n_photon": 1000.0, "variance": 1e-4},
    "simulation": {"n_total": 100, "n_per_frame": 5, "radius": 0.01},
    "evaluation": {"r_detect": 0.02, "r_rmse": 0.1, "lambda_grid": None},
    "certify": {
        "kind": "eta_w", "center": 1.0, "order": 2, "spikes": None, "amplitudes": None,
        "lower": None, "upper": None, "n_points": 1000, "exclusion_steps": 2.0,
    },
    "demo": {
        "sigma": 0.05, "n_samples": 100, "positions": [0.3, 0.37, 0.7],
        "amplitudes": [1.3, 0.8, 1.4], "noise_level": 1e-4, "lam": 0.05, "positive": True,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _check_types(cfg: dict) -> None:
    k = cfg["kernel"]
    if k["variant"] not in VARIANTS:
        raise ConfigError(f"kernel.variant must be one of {', '.join(VARIANTS)}")
    for sec, key in [("kernel", "n_planes"), ("kernel", "n1"), ("kernel", "n2"),
                     ("kernel", "n_samples"), ("solver", "max_outer"),
                     ("simulation", "n_total"), ("simulation", "n_per_frame"),
                     ("run", "seed")]:
        v = cfg[sec][key]
        if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
            raise ConfigError(f"{sec}.{key} must be a positive integer")
    if cfg["solver"]["lam"] is not None and not cfg["solver"]["lam"] > 0:
        raise ConfigError("solver.lam must be positive")
    if not cfg["solver"]["lam_factor"] > 0:
        raise ConfigError("solver.lam_factor must be positive")
    if not cfg["noise"]["n_photon"] > 0 or cfg["noise"]["variance"] < 0:
        raise ConfigError("noise.n_photon must be positive and noise.variance non-negative")


def loads(text: str, base: dict | None = None) -> dict:
    """Parse config text on top of ``base`` (defaults if omitted)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    cfg = default_config() if base is None else copy.deepcopy(base)
    seen = set()
    for sec in parser.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            try:
                cfg[sec][key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{sec}.{key}: value is not a JSON literal ({raw!r})") from exc
            seen.add((sec, key))
    for sec, key in sorted(REQUIRED - seen):
        raise ConfigError(f"missing required key {sec}.{key}")
    _check_types(cfg)
    return cfg


def load(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def dumps(cfg: dict) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for sec, entries in cfg.items():
        parser[sec] = {k: json.dumps(v) for k, v in entries.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def build_kernel(cfg: dict):
    k = cfg["kernel"]
    variant = k["variant"]
    bounds = {}
    if k["lower"] is not None:
        bounds["lower"] = float(k["lower"])
    if k["upper"] is not None:
        bounds["upper"] = float(k["upper"])
    if variant == "gaussian1d":
        return Gaussian1D(0.05 if k["sigma"] is None else k["sigma"], k["n_samples"])
    if variant in ("laplace", "laplace_normalized"):
        return SampledLaplace.uniform(k["n_samples"], k["s_max"],
                                      normalized=variant == "laplace_normalized", **bounds)
    if variant.startswith("continuous_laplace"):
        return ContinuousLaplace(normalized=variant.endswith("normalized"), **bounds)
    optics = Optics(k["b1"], k["b2"], k["b3"], k["n1"], k["n2"], k["na"], k["n_i"],
                    k["n_t"], k["wavelength"])
    K = k["n_planes"]
    if variant == "astigmatism":
        return Astigmatism(optics, K, alpha=k["alpha"], beta=k["beta"], sigma0=k["sigma"],
                           dof=k["dof"], focal_depths=k["focal_depths"])
    if variant == "double_helix":
        return DoubleHelix(optics, K, sigma=k["sigma"], omega=k["omega"],
                           theta_speed=k["theta_speed"], focal_depths=k["focal_depths"])
    return MaTirf(optics, K, sigma=k["sigma"], sqrt_depth=k["sqrt_depth"])


def solver_configs(cfg: dict) -> tuple[LassoConfig, DescentConfig]:
    s = cfg["solver"]
    return (
        LassoConfig(max_iter=s["lasso_max_iter"], tol=s["lasso_tol"]),
        DescentConfig(max_iter=s["descent_max_iter"], grad_tol=s["descent_grad_tol"],
                      memory=s["descent_memory"]),
    )


def lambda_reference(kernel, y: np.ndarray) -> float:
    """``0.1 * max |Phi^* y|`` over the kernel's default grid."""
    return 0.1 * float(np.abs(kernel.adjoint_grid(np.asarray(y, dtype=float),
                                                  kernel.default_grid())).max())


def frame_lambda(cfg: dict, kernel, y) -> float:
    s = cfg["solver"]
    if s["lam"] is not None:
        return float(s["lam"])
    ref = lambda_reference(kernel, y)
    return s["lam_factor"] * ref if ref > 0 else s["lam_factor"]
