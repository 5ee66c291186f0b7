"""Run configuration: one flat, validated record loaded from JSON plus overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .nn import NetworkConfig


@dataclass(frozen=True)
class RunConfig:
    # network
    input_dim: int = 20
    hidden_sizes: tuple[int, ...] = (64, 64, 64, 128, 128, 128, 256)
    leaky_slope: float = 0.01
    dropout_rate: float = 0.5
    l2_coeff: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 400
    init_scheme: str = "glorot_uniform"
    seed: int = 0
    # signal chain
    filter_low_hz: float = 5.0
    filter_high_hz: float = 15.0
    filter_order: int = 4
    integration_ms: float = 150.0
    channel: int = 0
    window_length_s: float = 10.0
    window_step_s: float = 5.0
    # features and labels
    normalization: str = "ratio"
    lf_norm_mode: str = "lf+hf"
    load_threshold: int = 5
    decision_threshold: float = 0.5
    # execution
    n_jobs: int = 1
    # synthetic cohort
    synth_n_experts: int = 5
    synth_n_novices: int = 4
    synth_windows_per_subject: int = 60
    synth_separation: float = 1.0
    synth_inverse: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        self.network()  # validates network fields
        if not 0 < self.filter_low_hz < self.filter_high_hz:
            raise ConfigError("filter band must satisfy 0 < filter_low_hz < filter_high_hz")
        if self.filter_order < 2 or self.filter_order % 2:
            raise ConfigError("filter_order must be an even integer >= 2")
        if self.integration_ms <= 0 or self.window_length_s <= 0 or self.window_step_s <= 0:
            raise ConfigError("integration and window lengths must be positive")
        if self.channel < 0:
            raise ConfigError("channel must be >= 0")
        if self.normalization not in ("ratio", "difference"):
            raise ConfigError("normalization must be 'ratio' or 'difference'")
        if self.lf_norm_mode not in ("lf+hf", "total-vlf"):
            raise ConfigError("lf_norm_mode must be 'lf+hf' or 'total-vlf'")
        if not 1 <= self.load_threshold <= 9:
            raise ConfigError("load_threshold must be an integer in 1..9")
        if not 0 < self.decision_threshold < 1:
            raise ConfigError("decision_threshold must lie in (0, 1)")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if self.synth_n_experts < 1 or self.synth_n_novices < 1 or self.synth_windows_per_subject < 1:
            raise ConfigError("synthetic cohort counts must be >= 1")
        if self.synth_separation < 0:
            raise ConfigError("synth_separation must be >= 0")

    def network(self) -> NetworkConfig:
        names = {f.name for f in fields(NetworkConfig)}
        return NetworkConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        defaults = cls()
        clean = {key: _coerce(key, value, getattr(defaults, key)) for key, value in data.items()}
        try:
            return cls(**clean)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None) -> "RunConfig":
        """Read ``path`` (JSON object) if given, then apply ``key=value`` overrides."""
        data = {}
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            try:
                data = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{p}: config must be a JSON object")
        for item in overrides or []:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} must look like key=value")
            try:
                data[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                data[key.strip()] = raw
        return cls.from_dict(data)


def _coerce(key, value, default):
    """Check a JSON value against the field's default type; ints are accepted for floats."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key} must be a list of integers")
        return tuple(value)
    return value
