"""YAML configuration mirroring the model parameters.

Layout::

    model:
      d: 1
      L: 64
      theta: 1.0
      beta: 1.0
      T: 1.0
      colors: [[1.0, 0.5], [-1.0, 0.5]]
      kernel: {profile: raised_cosine, width: 0.1}
    experiment:
      ...            # subcommand-specific keys

CLI flags override file values.  The worker count for replica loops comes
from the environment variable KACGLAUBER_WORKERS (default 1).
"""

from __future__ import annotations

import os
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import KernelSpec, ModelParams

WORKERS_ENV = "KACGLAUBER_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def load_config(fname) -> dict:
    text = Path(fname).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{fname}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{fname}: top level must be a mapping")
    return data


def kernel_from_dict(data: dict | None) -> KernelSpec:
    data = dict(data or {})
    return KernelSpec(
        profile=data.pop("profile", "gaussian"),
        width=float(data.pop("width", 0.1)),
        amplitude=float(data.pop("amplitude", 1.0)),
        normalize=bool(data.pop("normalize", True)),
    )


def params_from_dict(model: dict) -> ModelParams:
    try:
        colors = tuple((float(a), float(p)) for a, p in model["colors"])
        return ModelParams(
            d=int(model.get("d", 1)),
            L=int(model["L"]),
            theta=float(model.get("theta", 0.0)),
            beta=float(model.get("beta", 1.0)),
            T=float(model.get("T", 1.0)),
            colors=colors,
            kernel=kernel_from_dict(model.get("kernel")),
        )
    except KeyError as exc:
        raise ConfigError(f"model config missing key {exc}") from exc


def params_to_dict(params: ModelParams) -> dict:
    return {
        "d": params.d,
        "L": params.L,
        "theta": params.theta,
        "beta": params.beta,
        "T": params.T,
        "colors": [[a, p] for a, p in params.colors],
        "kernel": {
            "profile": params.kernel.profile,
            "width": params.kernel.width,
            "amplitude": params.kernel.amplitude,
            "normalize": params.kernel.normalize,
        },
    }


def parse_colors(text: str) -> tuple[tuple[float, float], ...]:
    """Parse 'a:p,a:p' pairs from the command line."""
    try:
        pairs = []
        for chunk in text.split(","):
            a, p = chunk.split(":")
            pairs.append((float(a), float(p)))
    except ValueError as exc:
        raise ConfigError(f"cannot parse colors from {text!r}; want 'a:p,a:p'") from exc
    if len(pairs) < 2:
        raise ConfigError("need at least two colors")
    return tuple(pairs)


def initial_profile_values(spec: str, M: int, d: int):
    """Built-in initial magnetization profiles: 'constant:c' or 'cosine:amp'."""
    import numpy as np

    from .model import grid_mesh

    kind, _, arg = spec.partition(":")
    val = float(arg) if arg else 0.0
    if kind == "constant":
        return np.full((M,) * d, val)
    if kind == "cosine":
        mesh = grid_mesh(M, d)
        out = np.full((M,) * d, 0.0)
        out += val * np.prod([np.cos(2.0 * np.pi * m) for m in mesh], axis=0)
        return out
    raise ConfigError(f"unknown initial profile {spec!r}; want constant:c or cosine:amp")
