"""Scenario configuration: a strict, versioned YAML schema.

Every run is driven by one scenario file.  Unknown keys are rejected with
their dotted path (no silent typos), defaults are filled on load, and a
resolved configuration can be written back out such that loading the written
file reproduces it exactly.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import yaml

from .calibration import PARAM_NAMES, FitConfig
from .epi_core import EpidemicParams
from .errors import ConfigError
from .ocp import ObjectiveWeights, SweepConfig
from .thermal import TransportScenario, MaterialProps, VialGeometry

SCHEMA_VERSION = 1

DEFAULT_COLUMNS = {
    "date": "data",
    "active": "totale_positivi",
    "recovered": "dimessi_guariti",
    "deceased": "deceduti",
}

# standard seed guesses used when a fit directive gives no explicit guess
DEFAULT_FIT_GUESS = {
    "omega": 0.06,
    "beta": 1.0,
    "gamma": 5.0,
    "delta": 0.5,
    "lambda1": 0.01,
    "lambda2": 0.1,
    "lambda3": 10.0,
    "kappa1": 0.001,
    "kappa2": 0.001,
    "kappa3": 10.0,
}


@dataclass(frozen=True)
class Window:
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(f"window end {self.end} precedes start {self.start}")

    @property
    def days(self) -> int:
        """Whole days spanned; daily samples = days + 1."""
        return (self.end - self.start).days


@dataclass
class InitialSpec:
    mode: str = "explicit"  # explicit | from-data
    E0: float | None = None
    I0: float | None = None
    Q0: float | None = None
    R0: float | None = None
    D0: float | None = None
    P0: float = 0.0


@dataclass
class FitSettings:
    initial_guess: dict = field(default_factory=lambda: dict(DEFAULT_FIT_GUESS))
    fit_initial_latent: bool = True
    latent_guess: tuple | None = None
    bounds: dict = field(default_factory=dict)
    damping_seed: float = 1e-3
    damping_growth: float = 5.0
    damping_shrink: float = 0.3
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    normalize_residuals: bool = False
    staged: bool = True
    restarts: int = 0
    restart_seed: int = 0
    window: Window | None = None  # None = full data span

    def to_fit_config(self, population: float, steps_per_day: int) -> FitConfig:
        guess = EpidemicParams(N=population, **self.initial_guess)
        return FitConfig(
            initial_guess=guess,
            fit_initial_latent=self.fit_initial_latent,
            latent_guess=self.latent_guess,
            bounds=self.bounds,
            damping_seed=self.damping_seed,
            damping_growth=self.damping_growth,
            damping_shrink=self.damping_shrink,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            normalize_residuals=self.normalize_residuals,
            staged=self.staged,
            restarts=self.restarts,
            restart_seed=self.restart_seed,
            steps_per_day=steps_per_day,
        )


@dataclass
class SweepSettings:
    relaxation: float = 0.5
    max_iterations: int = 300
    tolerance: float = 1e-6


@dataclass
class ScenarioConfig:
    population: float
    window: Window
    steps_per_day: int = 10
    seed: int = 0
    output_dir: str = "out"
    data_path: str | None = None
    data_columns: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    initial: InitialSpec = field(default_factory=InitialSpec)
    parameters: EpidemicParams | None = None
    fit: FitSettings | None = None
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    transport: TransportScenario | None = None
    transport_reference_c: float = -94.5
    seed_override: int | None = None  # set by the CLI when --seed/EPICTRL_SEED is given

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(
            weights=self.weights,
            relaxation=self.sweep.relaxation,
            max_iterations=self.sweep.max_iterations,
            tolerance=self.sweep.tolerance,
        )


def _require_keys(section: dict, allowed: set, path: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {path or 'top level'}")


def _as_date(value, path: str) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError as err:
            raise ConfigError(f"{path}: not an ISO date: {value!r}") from err
    raise ConfigError(f"{path}: expected a date, got {value!r}")


def _as_float(value, path: str, optional: bool = False):
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_int(value, path: str, optional: bool = False):
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value required")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return int(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    return value


def _param_set(section, path: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected a mapping of parameter values")
    _require_keys(section, set(PARAM_NAMES), path)
    missing = [n for n in PARAM_NAMES if n not in section]
    if missing:
        raise ConfigError(f"{path}: missing parameter(s) {', '.join(missing)}")
    return {n: _as_float(section[n], f"{path}.{n}") for n in PARAM_NAMES}


def _parse_window(section, path: str) -> Window:
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected a mapping with start/end")
    _require_keys(section, {"start", "end"}, path)
    if "start" not in section or "end" not in section:
        raise ConfigError(f"{path}: needs both start and end")
    return Window(_as_date(section["start"], f"{path}.start"),
                  _as_date(section["end"], f"{path}.end"))


_TOP_KEYS = {
    "schema_version", "population", "window", "steps_per_day", "seed",
    "output_dir", "data_path", "data_columns", "initial", "parameters",
    "fit", "weights", "sweep", "transport",
}
_INITIAL_KEYS = {"mode", "E0", "I0", "Q0", "R0", "D0", "P0"}
_FIT_KEYS = {
    "initial_guess", "fit_initial_latent", "latent_guess", "bounds",
    "damping_seed", "damping_growth", "damping_shrink", "max_iterations",
    "gradient_tolerance", "normalize_residuals", "staged", "restarts",
    "restart_seed", "window",
}
_WEIGHT_KEYS = {"w1", "w2"}
_SWEEP_KEYS = {"relaxation", "max_iterations", "tolerance"}
_TRANSPORT_KEYS = {
    "radius_m", "height_m", "conductivity_w_per_m_c", "density_kg_per_m3",
    "heat_capacity_w_s_per_kg_c", "alpha_override_m2_per_s", "arrival_time_s",
    "boundary_temp_c", "target_temp_c", "cap_condition", "criterion",
    "probe_r_m", "probe_z_m", "radial_nodes", "axial_nodes", "time_steps",
    "reference_initial_temp_c",
}


def _parse_transport(section, path: str):
    _require_keys(section, _TRANSPORT_KEYS, path)
    get = section.get
    geometry = VialGeometry(
        radius=_as_float(get("radius_m", 0.03), f"{path}.radius_m"),
        height=_as_float(get("height_m", 0.04), f"{path}.height_m"),
    )
    material = MaterialProps(
        conductivity=_as_float(get("conductivity_w_per_m_c", 0.0137), f"{path}.conductivity_w_per_m_c"),
        density=_as_float(get("density_kg_per_m3", 2600.0), f"{path}.density_kg_per_m3"),
        heat_capacity=_as_float(get("heat_capacity_w_s_per_kg_c", 750.0), f"{path}.heat_capacity_w_s_per_kg_c"),
    )
    probe_r = _as_float(get("probe_r_m"), f"{path}.probe_r_m", optional=True)
    probe_z = _as_float(get("probe_z_m"), f"{path}.probe_z_m", optional=True)
    if (probe_r is None) != (probe_z is None):
        raise ConfigError(f"{path}: probe_r_m and probe_z_m must be given together")
    try:
        scenario = TransportScenario(
            geometry=geometry,
            material=material,
            arrival_time=_as_float(get("arrival_time_s", 7200.0), f"{path}.arrival_time_s"),
            boundary_temp=_as_float(get("boundary_temp_c", 0.0), f"{path}.boundary_temp_c"),
            target_temp=_as_float(get("target_temp_c", -70.0), f"{path}.target_temp_c"),
            cap_condition=get("cap_condition", "insulated"),
            criterion=get("criterion", "volume-average"),
            probe=(probe_r, probe_z) if probe_r is not None else None,
            n_r=_as_int(get("radial_nodes", 101), f"{path}.radial_nodes"),
            n_z=_as_int(get("axial_nodes", 101), f"{path}.axial_nodes"),
            n_t=_as_int(get("time_steps"), f"{path}.time_steps", optional=True),
            alpha_override=_as_float(get("alpha_override_m2_per_s"), f"{path}.alpha_override_m2_per_s", optional=True),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err
    reference = _as_float(get("reference_initial_temp_c", -94.5), f"{path}.reference_initial_temp_c")
    return scenario, reference


def parse_scenario(raw: dict, source: str = "<config>") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    _require_keys(raw, _TOP_KEYS, "")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "population" not in raw:
        raise ConfigError("population: value required")
    if "window" not in raw:
        raise ConfigError("window: section required")
    population = _as_float(raw["population"], "population")
    if population <= 0:
        raise ConfigError("population must be positive")
    window = _parse_window(raw["window"], "window")

    steps_per_day = _as_int(raw.get("steps_per_day", 10), "steps_per_day")
    if steps_per_day < 1:
        raise ConfigError("steps_per_day must be >= 1")
    seed = _as_int(raw.get("seed", 0), "seed")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir: expected a string")
    data_path = raw.get("data_path")
    if data_path is not None and not isinstance(data_path, str):
        raise ConfigError("data_path: expected a string or null")

    columns = dict(DEFAULT_COLUMNS)
    if "data_columns" in raw:
        _require_keys(raw["data_columns"], set(DEFAULT_COLUMNS), "data_columns")
        for key, val in raw["data_columns"].items():
            if not isinstance(val, str):
                raise ConfigError(f"data_columns.{key}: expected a string")
            columns[key] = val

    initial = InitialSpec()
    if "initial" in raw:
        section = raw["initial"]
        _require_keys(section, _INITIAL_KEYS, "initial")
        mode = section.get("mode", "explicit")
        if mode not in ("explicit", "from-data"):
            raise ConfigError(f"initial.mode must be 'explicit' or 'from-data', got {mode!r}")
        initial = InitialSpec(
            mode=mode,
            E0=_as_float(section.get("E0"), "initial.E0", optional=True),
            I0=_as_float(section.get("I0"), "initial.I0", optional=True),
            Q0=_as_float(section.get("Q0"), "initial.Q0", optional=True),
            R0=_as_float(section.get("R0"), "initial.R0", optional=True),
            D0=_as_float(section.get("D0"), "initial.D0", optional=True),
            P0=_as_float(section.get("P0", 0.0), "initial.P0"),
        )
    if initial.mode == "from-data":
        for name in ("Q0", "R0", "D0"):
            if getattr(initial, name) is not None:
                raise ConfigError(f"initial.{name} must be omitted in from-data mode")

    has_params = raw.get("parameters") is not None
    has_fit = "fit" in raw
    if has_params and has_fit:
        raise ConfigError("give either explicit 'parameters' or a 'fit' directive, not both")
    parameters = None
    fit = None
    if has_params:
        values = _param_set(raw["parameters"], "parameters")
        try:
            parameters = EpidemicParams(N=population, **values)
        except ValueError as err:
            raise ConfigError(f"parameters: {err}") from err
    else:
        section = raw.get("fit") or {}
        _require_keys(section, _FIT_KEYS, "fit")
        guess = dict(DEFAULT_FIT_GUESS)
        if "initial_guess" in section:
            guess = _param_set(section["initial_guess"], "fit.initial_guess")
        latent_guess = None
        if section.get("latent_guess") is not None:
            lg = section["latent_guess"]
            _require_keys(lg, {"E0", "I0"}, "fit.latent_guess")
            latent_guess = (_as_float(lg.get("E0"), "fit.latent_guess.E0"),
                            _as_float(lg.get("I0"), "fit.latent_guess.I0"))
        bounds = {}
        for key, pair in (section.get("bounds") or {}).items():
            if key not in PARAM_NAMES and key not in ("E0", "I0"):
                raise ConfigError(f"fit.bounds: unknown parameter {key!r}")
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                raise ConfigError(f"fit.bounds.{key}: expected [lo, hi]")
            bounds[key] = (
                _as_float(pair[0], f"fit.bounds.{key}[0]"),
                _as_float(pair[1], f"fit.bounds.{key}[1]"),
            )
        fit_window = None
        if section.get("window") is not None:
            fit_window = _parse_window(section["window"], "fit.window")
        fit = FitSettings(
            initial_guess=guess,
            fit_initial_latent=_as_bool(section.get("fit_initial_latent", True), "fit.fit_initial_latent"),
            latent_guess=latent_guess,
            bounds=bounds,
            damping_seed=_as_float(section.get("damping_seed", 1e-3), "fit.damping_seed"),
            damping_growth=_as_float(section.get("damping_growth", 5.0), "fit.damping_growth"),
            damping_shrink=_as_float(section.get("damping_shrink", 0.3), "fit.damping_shrink"),
            max_iterations=_as_int(section.get("max_iterations", 500), "fit.max_iterations"),
            gradient_tolerance=_as_float(section.get("gradient_tolerance", 1e-8), "fit.gradient_tolerance"),
            normalize_residuals=_as_bool(section.get("normalize_residuals", False), "fit.normalize_residuals"),
            staged=_as_bool(section.get("staged", True), "fit.staged"),
            restarts=_as_int(section.get("restarts", 0), "fit.restarts"),
            restart_seed=_as_int(section.get("restart_seed", 0), "fit.restart_seed"),
            window=fit_window,
        )

    weights = ObjectiveWeights()
    if "weights" in raw:
        _require_keys(raw["weights"], _WEIGHT_KEYS, "weights")
        try:
            weights = ObjectiveWeights(
                w1=_as_float(raw["weights"].get("w1", 1.0), "weights.w1"),
                w2=_as_float(raw["weights"].get("w2", 1.0), "weights.w2"),
            )
        except ValueError as err:
            raise ConfigError(f"weights: {err}") from err

    sweep = SweepSettings()
    if "sweep" in raw:
        _require_keys(raw["sweep"], _SWEEP_KEYS, "sweep")
        sweep = SweepSettings(
            relaxation=_as_float(raw["sweep"].get("relaxation", 0.5), "sweep.relaxation"),
            max_iterations=_as_int(raw["sweep"].get("max_iterations", 300), "sweep.max_iterations"),
            tolerance=_as_float(raw["sweep"].get("tolerance", 1e-6), "sweep.tolerance"),
        )

    transport, reference = _parse_transport(raw.get("transport", {}) or {}, "transport")

    return ScenarioConfig(
        population=population,
        window=window,
        steps_per_day=steps_per_day,
        seed=seed,
        output_dir=output_dir,
        data_path=data_path,
        data_columns=columns,
        initial=initial,
        parameters=parameters,
        fit=fit,
        weights=weights,
        sweep=sweep,
        transport=transport,
        transport_reference_c=reference,
    )


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed YAML in {path}: {err}") from err
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    return parse_scenario(raw, source=str(path))


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully resolved mapping; parse_scenario(result) == cfg."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "population": cfg.population,
        "window": {"start": cfg.window.start, "end": cfg.window.end},
        "steps_per_day": cfg.steps_per_day,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "data_path": cfg.data_path,
        "data_columns": dict(cfg.data_columns),
        "initial": {
            "mode": cfg.initial.mode,
            "E0": cfg.initial.E0,
            "I0": cfg.initial.I0,
            "Q0": cfg.initial.Q0,
            "R0": cfg.initial.R0,
            "D0": cfg.initial.D0,
            "P0": cfg.initial.P0,
        },
        "weights": {"w1": cfg.weights.w1, "w2": cfg.weights.w2},
        "sweep": {
            "relaxation": cfg.sweep.relaxation,
            "max_iterations": cfg.sweep.max_iterations,
            "tolerance": cfg.sweep.tolerance,
        },
    }
    if cfg.parameters is not None:
        out["parameters"] = {n: getattr(cfg.parameters, n) for n in PARAM_NAMES}
    else:
        f = cfg.fit
        out["fit"] = {
            "initial_guess": dict(f.initial_guess),
            "fit_initial_latent": f.fit_initial_latent,
            "latent_guess": (
                {"E0": f.latent_guess[0], "I0": f.latent_guess[1]}
                if f.latent_guess is not None else None
            ),
            "bounds": {k: list(v) for k, v in f.bounds.items()},
            "damping_seed": f.damping_seed,
            "damping_growth": f.damping_growth,
            "damping_shrink": f.damping_shrink,
            "max_iterations": f.max_iterations,
            "gradient_tolerance": f.gradient_tolerance,
            "normalize_residuals": f.normalize_residuals,
            "staged": f.staged,
            "restarts": f.restarts,
            "restart_seed": f.restart_seed,
            "window": (
                {"start": f.window.start, "end": f.window.end}
                if f.window is not None else None
            ),
        }
    t = cfg.transport
    out["transport"] = {
        "radius_m": t.geometry.radius,
        "height_m": t.geometry.height,
        "conductivity_w_per_m_c": t.material.conductivity,
        "density_kg_per_m3": t.material.density,
        "heat_capacity_w_s_per_kg_c": t.material.heat_capacity,
        "alpha_override_m2_per_s": t.alpha_override,
        "arrival_time_s": t.arrival_time,
        "boundary_temp_c": t.boundary_temp,
        "target_temp_c": t.target_temp,
        "cap_condition": t.cap_condition,
        "criterion": t.criterion,
        "probe_r_m": t.probe[0] if t.probe else None,
        "probe_z_m": t.probe[1] if t.probe else None,
        "radial_nodes": t.n_r,
        "axial_nodes": t.n_z,
        "time_steps": t.n_t,
        "reference_initial_temp_c": cfg.transport_reference_c,
    }
    return out


def write_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(cfg), fh, sort_keys=False, default_flow_style=False)
