"""Run configuration: JSON file plus command-line overrides, with a stable hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .sermodel import HIGH, LOW

STAGES = ("global", "detailed", "both")
MODES = (HIGH, LOW)
# Keys that say where results go rather than what is computed.
_OUTPUT_KEYS = frozenset({"out"})
_INPUT_KEYS = ("netlist", "library", "map", "rmap", "placement", "report")


class ConfigError(ValueError):
    """Bad or inconsistent run configuration (exit code 2)."""


@dataclass
class RunConfig:
    # paths
    netlist: str | None = None
    library: str | None = None
    map: str | None = None
    rmap: str | None = None
    placement: str | None = None
    report: str | None = None
    out: str | None = None
    # global seed, shared by every stochastic stage
    seed: int = 0
    # variation map
    mu: float = 0.22
    sigma: float = 0.55 * 0.22 / 3.0
    phi: float = 0.5
    grid_n: int = 300
    min_area: int = 0
    bridge_area: int = 0
    # soft-error model
    mode: str = HIGH
    w0: float = 3.0
    # global placement
    stage: str = "both"
    utilization: float = 0.5
    K: float = 2.5
    penalty_iters: int = 3
    penalty_scale: float = 1.0
    penalty_start_level: int = 1
    # detailed placement
    dser_max: float = 0.1
    dwl_max: float = 0.1
    masking_distance_x: float = 2.0
    oval_ax: float = 2.0
    oval_ay: float = 0.4
    max_iters: int = 10
    retry_limit: int = 3
    jfp_trials: int = 2000
    mcks_mode: str = "auto"
    # evaluation
    trials: int = 100_000

    def validate(self) -> "RunConfig":
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.trials < 1 or self.jfp_trials < 1:
            raise ConfigError("trial counts must be >= 1")
        if not self.utilization > 0:
            raise ConfigError("utilization must be positive")
        for key in _INPUT_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}")
        return self

    def config_hash(self) -> str:
        """SHA-256 over the computation-relevant settings.

        Input files enter by content digest, not by path, so the same inputs
        at another location give the same hash.
        """
        doc = {}
        for k, v in asdict(self).items():
            if k in _OUTPUT_KEYS:
                continue
            if k in _INPUT_KEYS and v is not None:
                v = hashlib.sha256(Path(v).read_bytes()).hexdigest()
            doc[k] = v
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def provenance(self, command: str) -> dict:
        return {"command": command, "config_hash": self.config_hash(), "seed": self.seed}


def _coerce(name: str, value):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if value is None:
        return None
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (optional) and apply overrides; overrides win.

    Relative paths inside the file resolve against the file's directory.
    """
    values: dict = {}
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        base = Path(path).parent
        for k, v in doc.items():
            if k in _INPUT_KEYS + ("out",) and v is not None and not Path(v).is_absolute():
                v = str(base / v)
            values[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()
