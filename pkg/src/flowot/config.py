"""YAML experiment configuration: schema validation and object builders."""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .costs import load_cost_table, power_cost
from .diffusion import (
    periodic_gaussian_density,
    uniform_density,
    zonal_bump_density,
)
from .errors import ConfigError
from .geometry import Model, ScaleFlow, ScaleLaw

EXPERIMENTS = (
    "wasserstein_monotonicity",
    "general_cost_monotonicity",
    "lemma_sweep",
    "duality_preservation",
    "theta_monotonicity",
    "admissibility_report",
)

_TOP_KEYS = {
    "experiment", "seed", "flow", "densities", "cost", "costs", "resolution",
    "tolerances", "lclock", "pairs", "preservation",
}

_MODELS = {"sphere2": Model.SPHERE2, "torus2": Model.TORUS2}
_LAWS = {
    "exact_backward_ricci": ScaleLaw.EXACT_BACKWARD_RICCI,
    "user_scale": ScaleLaw.USER_SCALE,
}

MAX_EXACT_POINTS = 400


@dataclass
class ExperimentConfig:
    """Validated experiment description (blocks stay as plain dicts)."""

    experiment: str
    seed: int
    flow: dict
    densities: list
    costs: list
    resolution: dict
    tolerances: dict
    lclock: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    preservation: dict = field(default_factory=dict)
    expect_violation: bool = False


def load_config(path):
    """Parse and validate a YAML config file into an ExperimentConfig."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return validate_config(raw)


def validate_config(raw):
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {EXPERIMENTS}, got {experiment!r}"
        )
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    flow = raw.get("flow")
    if not isinstance(flow, dict):
        raise ConfigError("flow block is required")
    _validate_flow(flow)

    densities = raw.get("densities", [])
    if not isinstance(densities, list):
        raise ConfigError("densities must be a list of blocks")
    for block in densities:
        _validate_density(block, flow["model"])

    costs = raw.get("costs")
    if costs is None:
        costs = [raw["cost"]] if "cost" in raw else []
    if not isinstance(costs, list):
        raise ConfigError("costs must be a list of cost blocks")
    for block in costs:
        _validate_cost(block)

    resolution = raw.get("resolution", {})
    if not isinstance(resolution, dict):
        raise ConfigError("resolution must be a mapping")
    n_points = resolution.get("n_points", 300)
    if not isinstance(n_points, int) or n_points < 4:
        raise ConfigError(f"n_points must be an integer >= 4, got {n_points!r}")
    if n_points > MAX_EXACT_POINTS:
        raise ConfigError(
            f"n_points {n_points} exceeds the exact-solver cap {MAX_EXACT_POINTS}"
        )
    for key in ("tau_grid", "s_grid"):
        if key in resolution:
            grid = parse_grid(resolution[key])
            if grid.size < 2 or np.any(np.diff(grid) <= 0):
                raise ConfigError(f"{key} must be strictly increasing")

    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("tolerances must be a mapping")

    return ExperimentConfig(
        experiment=experiment,
        seed=seed,
        flow=flow,
        densities=densities,
        costs=costs,
        resolution=dict(resolution, n_points=n_points),
        tolerances=tolerances,
        lclock=raw.get("lclock", {}),
        pairs=raw.get("pairs", {}),
        preservation=raw.get("preservation", {}),
        expect_violation=bool(flow.get("expect_violation", False)),
    )


def _validate_flow(flow):
    if flow.get("model") not in _MODELS:
        raise ConfigError(f"flow.model must be one of {sorted(_MODELS)}")
    law = flow.get("law", "exact_backward_ricci")
    if law not in _LAWS:
        raise ConfigError(f"flow.law must be one of {sorted(_LAWS)}")
    if law == "user_scale":
        taus = flow.get("tau_samples")
        cs = flow.get("c_samples")
        if not taus or not cs or len(taus) != len(cs):
            raise ConfigError("user_scale flows need matching tau_samples/c_samples")
    domain = flow.get("tau_domain", [0.0, 1.0])
    if len(domain) != 2 or not domain[0] < domain[1]:
        raise ConfigError(f"flow.tau_domain must be [lo, hi] with lo < hi: {domain}")


def _validate_density(block, model_name):
    if not isinstance(block, dict):
        raise ConfigError("each density block must be a mapping")
    kind = block.get("kind")
    if kind == "uniform":
        return
    if kind == "zonal_bumps":
        if model_name != "sphere2":
            raise ConfigError("zonal_bumps densities require flow.model sphere2")
    elif kind == "periodic_gaussians":
        if model_name != "torus2":
            raise ConfigError("periodic_gaussians densities require flow.model torus2")
    else:
        raise ConfigError(f"unknown density kind {kind!r}")
    comps = block.get("components")
    if not isinstance(comps, list) or not comps:
        raise ConfigError(f"{kind} density needs a non-empty components list")
    width = 3 if kind == "zonal_bumps" else 4
    for comp in comps:
        if not isinstance(comp, list) or len(comp) != width:
            raise ConfigError(
                f"{kind} components must be length-{width} lists, got {comp!r}"
            )


def _validate_cost(block):
    if not isinstance(block, dict):
        raise ConfigError("cost block must be a mapping")
    family = block.get("family")
    if family == "power":
        p = block.get("p")
        if not isinstance(p, (int, float)) or p <= 0:
            raise ConfigError(f"power cost needs p > 0, got {p!r}")
    elif family == "table":
        if not block.get("path"):
            raise ConfigError("table cost needs a path")
    else:
        raise ConfigError(f"unknown cost family {family!r}")


def parse_grid(spec):
    """Grid from an explicit list or a {start, stop, num} mapping."""
    if isinstance(spec, dict):
        try:
            return np.linspace(float(spec["start"]), float(spec["stop"]),
                               int(spec["num"]))
        except KeyError as err:
            raise ConfigError(f"grid mapping missing key {err}") from err
    return np.asarray(spec, dtype=float)


def build_flow(cfg):
    """Instantiate the ScaleFlow described by the config flow block."""
    flow = cfg.flow
    law = _LAWS[flow.get("law", "exact_backward_ricci")]
    kwargs = dict(
        model=_MODELS[flow["model"]],
        c0=float(flow.get("c0", 1.0)),
        K=float(flow.get("K", 0.0)),
        law=law,
        tau_domain=tuple(flow.get("tau_domain", (0.0, 1.0))),
        enforce_margin=not cfg.expect_violation,
    )
    if law is ScaleLaw.USER_SCALE:
        kwargs["tau_samples"] = np.asarray(flow["tau_samples"], dtype=float)
        kwargs["c_samples"] = np.asarray(flow["c_samples"], dtype=float)
    if "delta_cut" in flow:
        kwargs["delta_cut"] = float(flow["delta_cut"])
    return ScaleFlow(**kwargs)


def build_cost(block):
    """Instantiate one cost function from its config block."""
    if block["family"] == "power":
        return power_cost(float(block["p"]), float(block.get("K", 0.0)))
    return load_cost_table(block["path"])


def build_density(block, flow, tau, band_limit=None):
    """Instantiate a spectral probability density at clock tau."""
    kind = block["kind"]
    if kind == "uniform":
        return uniform_density(flow, tau, band_limit)
    if kind == "zonal_bumps":
        comps = [tuple(map(float, c)) for c in block["components"]]
        smoothing = float(block.get("smoothing", 0.01))
        return zonal_bump_density(flow, tau, comps, band_limit,
                                  smoothing=smoothing)
    comps = [((float(c[0]), float(c[1])), float(c[2]), float(c[3]))
             for c in block["components"]]
    return periodic_gaussian_density(flow, tau, comps, band_limit)
