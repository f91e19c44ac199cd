"""
Run configuration for planefold.

A RunConfig holds everything a command needs; it is saved next to every
report and can be loaded back with --config to repeat a run.
"""
import json
import math
from dataclasses import dataclass, asdict, field as dataclass_field, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

from config.settings import CONFIG
from core.errors import PlanefoldError, RunConfigError
from core.fieldspec import VectorField, load_field_file, parse_field
from core.testfields import builtin

COMMANDS = ("analyze", "trace", "cycle", "hyperbolize", "sweep")
BUILTIN_PREFIX = "builtin:"


@dataclass
class RunConfig:
    """Resolved options of one planefold run."""
    command: str = "analyze"
    field: str = ""
    params: Dict[str, float] = dataclass_field(default_factory=dict)
    sweep_params: Dict[str, List[float]] = dataclass_field(default_factory=dict)
    seeds: List[List[float]] = dataclass_field(default_factory=list)
    foliation: int = 1
    step: float = CONFIG.TRACE_STEP
    tol: float = CONFIG.CYCLE_RETURN_TOL
    arc: float = CONFIG.TRACE_ARC_BUDGET
    heading: Optional[List[float]] = None
    depth: int = 1
    budget: float = CONFIG.HYPERBOLIZE_BUDGET
    fd_step: float = CONFIG.FD_STEP
    out: str = ""
    log_file: str = ""
    verbose: bool = False

    def validate(self) -> "RunConfig":
        """
        Check the configuration.

        Raises:
            RunConfigError: on the first invalid option
        """
        if self.command not in COMMANDS:
            raise RunConfigError(f"unknown command '{self.command}' (expected one of {', '.join(COMMANDS)})")
        if not self.field and self.command != "sweep":
            raise RunConfigError("no field given (use --field)")
        if self.foliation not in (1, 2):
            raise RunConfigError(f"foliation must be 1 or 2, got {self.foliation}")
        for name in ("step", "tol", "arc", "budget", "fd_step"):
            value = getattr(self, name)
            if not value > 0:
                raise RunConfigError(f"{name} must be positive, got {value}")
        if self.depth < 0:
            raise RunConfigError(f"bracket depth must be non-negative, got {self.depth}")
        for seed in self.seeds:
            if len(seed) != 3:
                raise RunConfigError(f"seed {seed} does not have three coordinates")
            if any(abs(c) > CONFIG.DOMAIN_BOX for c in seed):
                raise RunConfigError(f"seed {seed} outside the domain box |x_i| <= {CONFIG.DOMAIN_BOX}")
        if self.heading is not None:
            if len(self.heading) != 3 or not any(self.heading):
                raise RunConfigError(f"heading {self.heading} is not a nonzero 3-vector")
        if self.command in ("analyze", "trace", "cycle", "hyperbolize") and not self.seeds:
            raise RunConfigError(f"command '{self.command}' needs at least one --seed")
        if self.command != "sweep" and self.sweep_params:
            raise RunConfigError("parameter alternatives with '|' are only allowed in sweep")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise RunConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**dict(data))

    def save(self, path: Union[str, Path]) -> Path:
        """Write the configuration as JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        """Read a configuration saved by `save`."""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            raise RunConfigError(f"could not read configuration {path}: {e}") from e
        if not isinstance(data, dict):
            raise RunConfigError(f"configuration {path} is not a JSON object")
        return cls.from_dict(data)

    @property
    def output_dir(self) -> Path:
        return CONFIG.get_output_dir(self.out or None)


def parse_vector(text: str) -> List[float]:
    """'x,y,z' -> [x, y, z]."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise RunConfigError(f"expected x,y,z, got '{text}'")
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise RunConfigError(f"expected x,y,z, got '{text}'") from e


def parse_params(text: str) -> Dict[str, List[float]]:
    """
    'lambda=0.1|0.2,a=0.2' -> {'lambda': [0.1, 0.2], 'a': [0.2]}.

    Raises:
        RunConfigError: on a malformed pair or a non-numeric value
    """
    out: Dict[str, List[float]] = {}
    if not text.strip():
        return out
    for pair in text.split(","):
        name, sep, values = pair.partition("=")
        name = name.strip()
        if not sep or not name.isidentifier():
            raise RunConfigError(f"malformed parameter '{pair.strip()}' (expected name=value)")
        try:
            out[name] = [float(v) for v in values.split("|")]
        except ValueError as e:
            raise RunConfigError(f"parameter '{name}' has a non-numeric value '{values}'") from e
        if not all(math.isfinite(v) for v in out[name]):
            raise RunConfigError(f"parameter '{name}' has a non-finite value '{values}'")
    return out


def split_params(grid: Mapping[str, List[float]]) -> Dict[str, float]:
    """Single values of a parameter grid; alternatives are rejected."""
    multi = [name for name, values in grid.items() if len(values) != 1]
    if multi:
        raise RunConfigError(f"parameters {', '.join(multi)} list alternatives outside sweep")
    return {name: values[0] for name, values in grid.items()}


def resolve_field(config: RunConfig, params: Optional[Mapping[str, float]] = None) -> VectorField:
    """
    Build the field named by the configuration.

    Args:
        config: run configuration
        params: overrides config.params (one sweep point)

    Returns:
        Normalized VectorField
    """
    source = config.field.strip()
    params = dict(config.params if params is None else params)
    if source.startswith(BUILTIN_PREFIX):
        try:
            return builtin(source[len(BUILTIN_PREFIX):], params)
        except KeyError as e:
            raise RunConfigError(str(e.args[0])) from e
    path = Path(source)
    try:
        is_file = path.is_file()
    except OSError:
        is_file = False
    try:
        if is_file:
            expr = load_field_file(path, params)
            return VectorField(expr, normalize=True, name=path.name)
        return VectorField(parse_field(source, params), normalize=True, name="inline")
    except PlanefoldError:
        raise
    except OSError as e:
        raise RunConfigError(f"could not read field file {path}: {e}") from e
