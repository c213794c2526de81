"""Run configuration: one JSON file, dotted command-line overrides, stable hash."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from datetime import date
from pathlib import Path
from typing import Any, Sequence

from .classifier import TrainConfig
from .errors import ValidationError
from .report import LlmRelayConfig


@dataclass
class DataPaths:
    prices: str = "prices.csv"
    factors: str = "factors.csv"
    news: str | None = "news.jsonl"
    embeddings: str | None = "embeddings.jsonl"
    risk_free: str | None = "risk_free.csv"


@dataclass
class Splits:
    train_end: str = "2020-07-01"
    validation_end: str = "2020-10-01"
    test_end: str = "2020-12-31"

    def dates(self) -> tuple[date, date, date]:
        try:
            return tuple(date.fromisoformat(x) for x in (self.train_end, self.validation_end, self.test_end))
        except ValueError as exc:
            raise ValidationError(f"bad split date: {exc}") from exc

    def segment(self, day: date) -> str | None:
        """'train' before train_end, 'validation' before validation_end, 'test' up to test_end."""
        train_end, val_end, test_end = self.dates()
        if day < train_end:
            return "train"
        if day < val_end:
            return "validation"
        if day <= test_end:
            return "test"
        return None


@dataclass
class EncodingConfig:
    d: int = 32
    d_e: int = 8
    seed: int = 0


@dataclass
class LabelConfig:
    return_kind: str = "close"
    min_symbols: int = 5


@dataclass
class FactorModelConfig:
    weighting: str = "equal"
    window: str = "all"


@dataclass
class RiskConfig:
    p: int = 1
    q: int = 1
    confidence: float = 0.95
    window: int = 60
    variant: str = "squared"
    n_starts: int = 20
    aggregation: str = "per_stock"


@dataclass
class BacktestConfig:
    cost: float = 0.001
    random_replications: int = 20


@dataclass
class ReportConfig:
    llm: LlmRelayConfig = field(default_factory=LlmRelayConfig)
    symbols: list[str] | None = None


@dataclass
class RunConfig:
    data: DataPaths = field(default_factory=DataPaths)
    output_dir: str = "runs"
    splits: Splits = field(default_factory=Splits)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    classifier: TrainConfig = field(default_factory=TrainConfig)
    factor_model: FactorModelConfig = field(default_factory=FactorModelConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    rng_seed: int = 0
    base_dir: str = "."

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def run_dir(self) -> Path:
        return self.resolve(self.output_dir) / f"run-{self.config_hash()}"

    def validate(self, check_paths: bool = True) -> None:
        train_end, val_end, test_end = self.splits.dates()
        if not train_end <= val_end <= test_end:
            raise ValidationError("splits must satisfy train_end <= validation_end <= test_end")
        if self.labels.return_kind not in ("close", "open"):
            raise ValidationError("labels.return_kind must be 'close' or 'open'")
        if self.factor_model.weighting not in ("equal", "value"):
            raise ValidationError("factor_model.weighting must be 'equal' or 'value'")
        if self.factor_model.window not in ("test", "all"):
            raise ValidationError("factor_model.window must be 'test' or 'all'")
        if not 0.5 < self.risk.confidence < 1.0:
            raise ValidationError("risk.confidence must lie in (0.5, 1)")
        if self.risk.window < 20:
            raise ValidationError("risk.window must be >= 20")
        if self.risk.variant not in ("squared", "signed"):
            raise ValidationError("risk.variant must be 'squared' or 'signed'")
        if self.risk.aggregation not in ("per_stock", "cross_section"):
            raise ValidationError("risk.aggregation must be 'per_stock' or 'cross_section'")
        if not 0.0 <= self.backtest.cost < 1.0:
            raise ValidationError("backtest.cost must lie in [0, 1)")
        if self.encoding.d <= 0 or self.encoding.d_e <= 0:
            raise ValidationError("encoding dimensions must be positive")
        if check_paths:
            for f in fields(self.data):
                value = getattr(self.data, f.name)
                if value is None:
                    if f.name in ("prices", "factors"):
                        raise ValidationError(f"data.{f.name} is required")
                    continue
                path = self.resolve(value)
                if not path.exists():
                    raise ValidationError(f"data.{f.name}: no such file {path}")


def _build(cls, data: Any, where: str):
    if not is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ValidationError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValidationError(f"unknown config keys at {where or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls.__name__, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip(".")) if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where or 'config'}: {exc}") from exc


_NESTED = {
    ("RunConfig", "data"): DataPaths,
    ("RunConfig", "splits"): Splits,
    ("RunConfig", "encoding"): EncodingConfig,
    ("RunConfig", "labels"): LabelConfig,
    ("RunConfig", "classifier"): TrainConfig,
    ("RunConfig", "factor_model"): FactorModelConfig,
    ("RunConfig", "risk"): RiskConfig,
    ("RunConfig", "backtest"): BacktestConfig,
    ("RunConfig", "report"): ReportConfig,
    ("ReportConfig", "llm"): LlmRelayConfig,
}


def _parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ValidationError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    raw = copy.deepcopy(raw)
    for text in overrides:
        keys, value = _parse_override(text)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ValidationError(f"cannot override inside non-object key {k!r}")
        node[keys[-1]] = value
    return raw


def config_from_dict(raw: dict, base_dir: str | Path = ".", overrides: Sequence[str] = ()) -> RunConfig:
    raw = apply_overrides(raw, overrides)
    raw.pop("base_dir", None)
    cfg = _build(RunConfig, raw, "")
    cfg.base_dir = str(base_dir)
    cfg.validate(check_paths=False)
    return cfg


def load_config(path, overrides: Sequence[str] = ()) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw, base_dir=path.parent.resolve(), overrides=overrides)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
