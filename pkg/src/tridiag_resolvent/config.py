"""JSON run configuration.

Complex numbers are always two-element arrays ``[re, im]``.  An operator is
given inline under ``"operator"`` or by path under ``"operator_file"`` (relative
paths resolve against the config file's directory)::

    {
      "operator": {
        "kind": "constant-tail",
        "alpha": [], "beta": [[5, 0]], "gamma": [],
        "tail": {"period": 1,
                 "alpha": [[0.5, 0]], "beta": [[0, 0]], "gamma": [[0.5, 0]],
                 "corrections": {"alpha": [], "beta": [], "gamma": []}}
      },
      "lambda": [2, 0],
      "n_max": 128
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .operator_model import CoefficientSpec, InvalidOperatorError, OperatorModel, build_operator
from .resolvent import ClassifyParams
from .scan import CHANNELS, ScanRegion

THRESHOLD_KEYS = ("q_max", "rms_max", "growth_margin", "gamma_threshold", "series_rtol",
                  "series_growth", "snap_rtol")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_complex(value, what: str) -> complex:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)):
        raise ConfigError(f"{what} must be a two-element array [re, im], got {value!r}")
    z = complex(float(value[0]), float(value[1]))
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"{what} must be finite, got {value!r}")
    return z


def _complex_list(values, what: str) -> tuple[complex, ...]:
    if values is None:
        return ()
    if not isinstance(values, list):
        raise ConfigError(f"{what} must be an array of [re, im] pairs")
    return tuple(parse_complex(v, f"{what}[{k}]") for k, v in enumerate(values))


def parse_operator(data) -> OperatorModel:
    if not isinstance(data, dict):
        raise ConfigError("operator must be a JSON object")
    unknown = set(data) - {"kind", "alpha", "beta", "gamma", "tail", "description"}
    if unknown:
        raise ConfigError(f"unknown operator fields: {sorted(unknown)}")
    if "kind" not in data:
        raise ConfigError("operator.kind is required")
    kw = {w: _complex_list(data.get(w), f"operator.{w}") for w in ("alpha", "beta", "gamma")}
    tail = data.get("tail")
    if data["kind"] != "explicit-list":
        if not isinstance(tail, dict):
            raise ConfigError(f"operator kind {data['kind']!r} needs a tail object")
        period = tail.get("period", 1)
        if not isinstance(period, int) or isinstance(period, bool):
            raise ConfigError("tail.period must be an integer")
        kw["period"] = period
        for w in ("alpha", "beta", "gamma"):
            kw["tail_" + w] = _complex_list(tail.get(w), f"tail.{w}")
        corr = tail.get("corrections") or {}
        if not isinstance(corr, dict):
            raise ConfigError("tail.corrections must be an object")
        for w in ("alpha", "beta", "gamma"):
            kw["corr_" + w] = _complex_list(corr.get(w), f"tail.corrections.{w}")
    elif tail is not None:
        raise ConfigError("explicit-list operators take no tail")
    try:
        return build_operator(CoefficientSpec(data["kind"], **kw))
    except InvalidOperatorError as exc:
        raise ConfigError(f"invalid operator: {exc}") from None


def _load_json(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _positive_int(value, what: str, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{what} must be an integer >= {minimum}, got {value!r}")
    return value


def _positive_float(value, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0 \
            or not math.isfinite(value):
        raise ConfigError(f"{what} must be a positive finite number, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    """Parsed configuration; each command checks the fields it needs."""

    source: Path | None
    raw: dict
    model: OperatorModel | None = None
    lam: complex | None = None
    phi: complex | None = None
    n_max: int | None = None
    param_overrides: dict = field(default_factory=dict)
    region: ScanRegion | None = None
    channels: tuple[str, ...] = CHANNELS
    block: int = 8
    tolerance: float = 1e-8
    moments_file: Path | None = None
    moments: list | None = None
    out: Path = Path(".")
    workers: int = 1
    high_precision: bool = False

    def require_model(self) -> OperatorModel:
        if self.model is None:
            raise ConfigError("config has no operator or operator_file")
        return self.model

    def require_lambda(self) -> complex:
        if self.lam is None:
            raise ConfigError("lambda is required (config 'lambda' or --lambda RE IM)")
        return self.lam

    @property
    def params(self) -> ClassifyParams:
        """Classification parameters; ``n_max`` here must be at least 64."""
        kw = dict(self.param_overrides)
        if self.n_max is not None:
            kw["n_max"] = self.n_max
        try:
            return ClassifyParams(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        """Everything needed to rerun: the raw config plus resolved settings."""
        return {
            "config": self.raw,
            "config_path": str(self.source) if self.source else None,
            "lambda": None if self.lam is None else [self.lam.real, self.lam.imag],
            "phi": None if self.phi is None else [self.phi.real, self.phi.imag],
            "n_max": self.n_max,
            "classify_overrides": self.param_overrides,
            "workers": self.workers,
            "high_precision": self.high_precision,
        }


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a config file and apply command-line overrides (non-None values win)."""
    path = Path(path)
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw, base=path.parent, source=path, overrides=overrides)


def config_from_dict(raw: dict, *, base: Path = Path("."), source: Path | None = None,
                     overrides: dict | None = None) -> RunConfig:
    data = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None and k != "out":
            data[k] = v
    cfg = RunConfig(source=source, raw=raw)

    if "operator" in data and "operator_file" in data:
        raise ConfigError("give either operator or operator_file, not both")
    if "operator" in data:
        cfg.model = parse_operator(data["operator"])
    elif "operator_file" in data:
        op_path = base / str(data["operator_file"])
        op = _load_json(op_path)
        cfg.model = parse_operator(op.get("operator", op) if isinstance(op, dict) else op)

    if data.get("lambda") is not None:
        cfg.lam = parse_complex(data["lambda"], "lambda")
    if data.get("phi") is not None:
        cfg.phi = parse_complex(data["phi"], "phi")
    if data.get("n_max") is not None:
        cfg.n_max = _positive_int(data["n_max"], "n_max")

    pkw = {}
    thresholds = data.get("thresholds") or {}
    if not isinstance(thresholds, dict):
        raise ConfigError("thresholds must be an object")
    unknown = set(thresholds) - set(THRESHOLD_KEYS)
    if unknown:
        raise ConfigError(f"unknown thresholds: {sorted(unknown)}")
    for k, v in thresholds.items():
        pkw[k] = _positive_float(v, f"thresholds.{k}")
    if "escalate_n" in data:
        pkw["escalate_n"] = (None if data["escalate_n"] is None
                             else _positive_int(data["escalate_n"], "escalate_n", 64))
    if "fast_path" in data:
        if not isinstance(data["fast_path"], bool):
            raise ConfigError("fast_path must be true or false")
        pkw["fast_path"] = data["fast_path"]
    try:
        ClassifyParams(**pkw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.param_overrides = pkw

    if data.get("region") is not None:
        reg = data["region"]
        if not isinstance(reg, dict):
            raise ConfigError("region must be an object")
        keys = ("re_min", "re_max", "im_min", "im_max", "nx", "ny")
        missing = [k for k in keys if k not in reg]
        if missing:
            raise ConfigError(f"region is missing {missing}")
        for k in keys[:4]:
            if not isinstance(reg[k], (int, float)) or isinstance(reg[k], bool) \
                    or not math.isfinite(reg[k]):
                raise ConfigError(f"region.{k} must be a finite number")
        try:
            cfg.region = ScanRegion(*(float(reg[k]) for k in keys[:4]),
                                    _positive_int(reg["nx"], "region.nx", 2),
                                    _positive_int(reg["ny"], "region.ny", 2))
        except ValueError as exc:
            raise ConfigError(f"invalid region: {exc}") from None
    if data.get("channels") is not None:
        ch = data["channels"]
        if not isinstance(ch, list) or not ch or any(c not in CHANNELS for c in ch):
            raise ConfigError(f"channels must be a non-empty subset of {list(CHANNELS)}")
        cfg.channels = tuple(dict.fromkeys(ch))

    if "block" in data:
        cfg.block = _positive_int(data["block"], "block")
    if "tolerance" in data:
        cfg.tolerance = _positive_float(data["tolerance"], "tolerance")

    if "moments_file" in data and "moments" in data:
        raise ConfigError("give either moments or moments_file, not both")
    if "moments_file" in data:
        cfg.moments_file = base / str(data["moments_file"])
    if "moments" in data:
        cfg.moments = list(_complex_list(data["moments"], "moments"))

    out_override = (overrides or {}).get("out")
    if out_override is not None:
        cfg.out = Path(out_override)
    elif raw.get("out") is not None:
        cfg.out = base / str(raw["out"])
    if data.get("workers") is not None:
        cfg.workers = _positive_int(data["workers"], "workers")
    if data.get("high_precision") is not None:
        if not isinstance(data["high_precision"], bool):
            raise ConfigError("high_precision must be true or false")
        cfg.high_precision = data["high_precision"]
    return cfg
