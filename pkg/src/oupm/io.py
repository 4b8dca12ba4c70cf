"""File formats: datasets (CSV), model files, run configs and plot-ready exports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core import TARGET_NAME, InputSeries, Model, ModelParams, PreprocessStats
from .sampler import DEFAULT_M, DEFAULT_QUANTILES, PathEnsemble

MODEL_MAGIC = "# oupm-model"
MODEL_FORMAT_VERSION = 1
TIME_COLUMN = "time_s"


class DataError(ValueError):
    """A dataset or model file failed validation."""


# --- datasets ---------------------------------------------------------------


def read_dataset(path, channels, target: str | None = None, dt: float | None = None,
                 require_target: bool = False, rows: int | None = None):
    """Load a CSV, binding columns by name.

    Returns ``(inputs, raw_target_or_None, frame)``. Timestamps must be
    strictly increasing and uniform to within ``1e-6 * dt``.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    if rows is not None:
        frame = frame.iloc[:rows]
    channels = list(channels)
    missing = [c for c in [TIME_COLUMN, *channels] if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; found {list(frame.columns)}")
    has_target = target is not None and target in frame.columns
    if require_target and not has_target:
        raise DataError(f"{path}: target column {target!r} is required")
    required = [TIME_COLUMN, *channels] + ([target] if has_target else [])
    for col in required:
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            raise DataError(f"{path}: missing or non-numeric value in column {col!r} at row {int(np.argmax(bad))}")
    t = frame[TIME_COLUMN].to_numpy(dtype=float)
    if t.size < 2:
        raise DataError(f"{path}: need at least 2 rows")
    steps = np.diff(t)
    step = float(np.median(steps)) if dt is None else float(dt)
    if not step > 0 or np.any(steps <= 0):
        raise DataError(f"{path}: timestamps must be strictly increasing")
    # cumulative drift check against the nominal grid
    grid_err = np.abs(t - (t[0] + step * np.arange(t.size)))
    if np.any(grid_err > 1e-6 * step):
        i = int(np.argmax(grid_err > 1e-6 * step))
        raise DataError(f"{path}: timestamps are not uniform with dt={step} (row {i}, t={t[i]})")
    inputs = InputSeries(t[0], step, frame[channels].to_numpy(dtype=float), tuple(channels))
    y_raw = frame[target].to_numpy(dtype=float) if has_target else None
    return inputs, y_raw, frame


def write_csv(path, columns: dict) -> None:
    """Write columns with round-trip float formatting (byte-stable across runs)."""
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")


def write_dataset(path, inputs: InputSeries, y_raw=None, target: str = TARGET_NAME, extra: dict | None = None):
    cols = {TIME_COLUMN: inputs.times}
    for j, name in enumerate(inputs.channel_names):
        cols[name] = inputs.u[:, j]
    if y_raw is not None:
        cols[target] = np.asarray(y_raw)
    cols.update(extra or {})
    write_csv(path, cols)


# --- model files ------------------------------------------------------------


def model_to_text(model: Model) -> str:
    body = {
        "format_version": MODEL_FORMAT_VERSION,
        "d": model.params.d,
        "channels": list(model.channel_names),
        "target": model.target_name,
        "dt": model.dt,
        "params": model.params.to_dict(),
        "preprocess": model.stats.to_dict(),
        "metadata": model.metadata,
    }
    return f"{MODEL_MAGIC} v{MODEL_FORMAT_VERSION}\n" + json.dumps(body, indent=2) + "\n"


def model_from_text(text: str) -> Model:
    header, _, rest = text.partition("\n")
    if not header.startswith(MODEL_MAGIC):
        raise DataError("not a model file (missing magic header line)")
    try:
        body = json.loads(rest)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file body is not valid JSON: {exc}") from None
    version = body.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version!r}")
    params = ModelParams.from_dict(body["params"])
    stats = PreprocessStats.from_dict(body["preprocess"])
    if body["d"] != params.d:
        raise DataError(f"model file declares d={body['d']} but stores {params.d} weights")
    return Model(params, stats, tuple(body["channels"]), body["dt"], body.get("target", TARGET_NAME),
                 body.get("metadata", {}))


def save_model(path, model: Model) -> None:
    Path(path).write_text(model_to_text(model))


def load_model(path) -> Model:
    try:
        return model_from_text(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no such model file") from None


# --- exports ----------------------------------------------------------------


def _qname(prefix: str, q: float) -> str:
    return f"{prefix}q{q * 100:g}"


def ensemble_tables(ens: PathEnsemble) -> tuple[dict, dict]:
    """``(summary, cumulative)`` column dicts for CSV export."""
    summary = {TIME_COLUMN: ens.times}
    for prefix, s in (("", ens.summary), ("raw_", ens.raw_summary)):
        summary[f"{prefix}mean"] = s.mean
        summary[f"{prefix}std"] = s.std
        summary[f"{prefix}median"] = s.median
        for q, v in s.quantiles.items():
            summary[_qname(prefix, q)] = v
    cb = ens.cumulative
    cumulative = {TIME_COLUMN: ens.times, "cum_mean": cb.mean, "cum_std": cb.std}
    for k in (1, 2, 3):
        cumulative[f"cum_lower_{k}sd"] = cb.lower(k)
        cumulative[f"cum_upper_{k}sd"] = cb.upper(k)
    return summary, cumulative


def write_ensemble(out_dir, ens: PathEnsemble, prefix: str = "", measured_raw=None) -> list[Path]:
    out_dir = Path(out_dir)
    summary, cumulative = ensemble_tables(ens)
    if measured_raw is not None:
        measured_raw = np.asarray(measured_raw, dtype=float)
        cumulative["cum_measured"] = np.concatenate([[0.0], np.cumsum(measured_raw[1:])])
    written = [out_dir / f"{prefix}summary.csv", out_dir / f"{prefix}cumulative.csv"]
    write_csv(written[0], summary)
    write_csv(written[1], cumulative)
    if ens.paths is not None:
        paths = {TIME_COLUMN: ens.times}
        paths.update({f"path{j}": ens.paths[j] for j in range(ens.M)})
        written.append(out_dir / f"{prefix}paths.csv")
        write_csv(written[-1], paths)
    return written


# --- run config ---------------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainSection(_Section):
    epochs: int = Field(1000, ge=1)
    batch_size: int = Field(512, ge=1)
    learning_rate: float = Field(1e-2, gt=0)
    seed: int | None = None
    early_stopping: bool = True


class ValidationSection(_Section):
    fraction: float = Field(0.15, gt=0, lt=1)
    indices: list[int] | None = None
    file: str | None = None
    use_train: bool = False


class SynthSection(_Section):
    true_lambda: float = Field(10.0, gt=0)
    true_a: float | list[float] = 2.0
    true_b: float = 1.0
    true_sigma: float = Field(0.5, ge=0)
    dt: float = Field(0.01, gt=0)
    n: int = Field(1001, ge=2)
    train_points: int = Field(701, ge=2)
    target_scale: float = Field(1.0, gt=0)
    schedule: list[tuple[float, float | list[float]]] | None = None

    @field_validator("schedule")
    @classmethod
    def _schedule_sorted(cls, v):
        if v is not None:
            if not v:
                raise ValueError("schedule must have at least one (start, level) entry")
            starts = [s for s, _ in v]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValueError("schedule start times must be strictly increasing")
            if starts[0] > 0:
                raise ValueError("schedule must start at t <= 0")
        return v

    @model_validator(mode="after")
    def _train_within(self):
        if self.train_points > self.n:
            raise ValueError("train_points exceeds n")
        return self


class RunConfig(_Section):
    channels: list[str] = Field(default_factory=lambda: ["u"])
    target: str = TARGET_NAME
    dt: float | None = Field(None, gt=0)
    train_file: str | None = None
    train_rows: int | None = Field(None, ge=2)
    validation: ValidationSection = Field(default_factory=ValidationSection)
    target_scale: float | None = Field(None, gt=0)
    zero_floor: float = Field(1e-9, gt=0)
    train: TrainSection = Field(default_factory=TrainSection)
    model_file: str | None = None
    predict_file: str | None = None
    eval_file: str | None = None
    n_paths: int = Field(DEFAULT_M, ge=1)
    quantiles: list[float] = Field(default_factory=lambda: list(DEFAULT_QUANTILES))
    seed: int = 0
    workers: int = Field(1, ge=1)
    out_dir: str = "out"
    synth: SynthSection | None = None

    @field_validator("channels")
    @classmethod
    def _channels_unique(cls, v):
        if not v:
            raise ValueError("at least one input channel is required")
        if len(set(v)) != len(v):
            raise ValueError("channel names must be unique")
        return v

    @field_validator("quantiles")
    @classmethod
    def _quantiles_open(cls, v):
        if any(not 0 < q < 1 for q in v):
            raise ValueError("quantiles must lie strictly inside (0, 1)")
        return v

    def resolve(self, base: Path) -> RunConfig:
        """Make file paths absolute relative to ``base`` (the config file's directory)."""
        def fix(p):
            return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p
        val = self.validation.model_copy(update={"file": fix(self.validation.file)})
        return self.model_copy(update={
            "train_file": fix(self.train_file), "predict_file": fix(self.predict_file),
            "eval_file": fix(self.eval_file), "model_file": fix(self.model_file),
            "out_dir": fix(self.out_dir), "validation": val,
        })


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except FileNotFoundError:
        raise DataError(f"{path}: no such config file") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}: config must be a mapping")
    return RunConfig.model_validate(data).resolve(path.parent)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json", exclude_none=True), sort_keys=False)
