"""Domain types, preprocessing statistics and the piecewise log-linear transform.

Units
-----
* raw target: whatever the sensor reports (non-negative)
* scaled target: raw / ``target_scale``
* transformed target: ``transform_forward(scaled)``; the OU state lives here
* standardized inputs: ``(u - input_means) / input_stds``
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

ZERO_FLOOR = 1e-9

# default column names for the sixteen engine inputs, in their usual order
ENGINE_CHANNELS = (
    "engine_speed", "brake_torque", "main_inj_timing", "main_inj_quantity",
    "pilot2_inj_timing", "pilot2_inj_quantity", "post1_inj_timing", "rail_pressure",
    "vgt_actuation", "egr_valve_actuation", "egr_outlet_temp", "intercooler_outlet_temp",
    "charge_air_flow", "egr_flow", "cylinder_o2", "turbine_inlet_temp",
)
TARGET_NAME = "pm"


class PreprocessWarning(UserWarning):
    """Raised (as a warning) when an input channel is constant on the training set."""


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        where = bad[0] if len(bad) == 1 else bad
        raise ValueError(f"{name} contains a non-finite value at index {where}")
    return arr


# --- scalar helpers ---------------------------------------------------------


def softplus(x):
    """log(1 + exp(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def softplus_inverse(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("softplus_inverse is defined for positive values only")
    # y + log(1 - exp(-y)), stable for both tiny and large y
    out = y + np.log(-np.expm1(-y))
    return out if out.ndim else float(out)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


# --- observable transform ---------------------------------------------------


def transform_forward(z):
    """Piecewise log-linear map: ``log(z)`` below 1, ``z - 1`` from 1 upward.

    Raises ``ValueError`` for non-positive input; callers that may see exact
    zeros should clip with :data:`ZERO_FLOOR` first (see :func:`scale_target`).
    """
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise ValueError("transform_forward requires strictly positive scaled values")
    with np.errstate(divide="ignore"):
        out = np.where(z < 1.0, np.log(z), z - 1.0)
    return out if out.ndim else float(out)


def transform_inverse(y):
    """Exact inverse of :func:`transform_forward`."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = np.where(y < 0.0, np.exp(np.minimum(y, 0.0)), y + 1.0)
    return out if out.ndim else float(out)


# --- domain types -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InputSeries:
    t0: float
    dt: float
    u: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        u = _as_float_array(self.u, "inputs")
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2:
            raise ValueError("inputs must be an N x d matrix")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if u.shape[0] < 2:
            raise ValueError("an input series needs at least 2 samples")
        names = tuple(self.channel_names)
        if len(names) != u.shape[1]:
            raise ValueError(f"{u.shape[1]} input columns but {len(names)} channel names")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def d(self) -> int:
        return self.u.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def standardized(self, stats: PreprocessStats) -> np.ndarray:
        if stats.d != self.d:
            raise ValueError(f"preprocessing expects {stats.d} channels, series has {self.d}")
        return stats.standardize(self.u)

    def slice(self, start: int, stop: int) -> InputSeries:
        return InputSeries(self.t0 + start * self.dt, self.dt, self.u[start:stop], self.channel_names)


@dataclass(frozen=True, eq=False)
class PreprocessStats:
    target_scale: float
    input_means: np.ndarray
    input_stds: np.ndarray
    constant_channels: tuple[int, ...] = ()
    zero_floor: float = ZERO_FLOOR

    def __post_init__(self):
        means = np.array(self.input_means, dtype=float).reshape(-1)
        stds = np.array(self.input_stds, dtype=float).reshape(-1)
        if means.shape != stds.shape:
            raise ValueError("input_means and input_stds must have equal length")
        if not self.target_scale > 0:
            raise ValueError(f"target_scale must be positive, got {self.target_scale}")
        if np.any(~(stds > 0)):
            raise ValueError("every input std must be positive")
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, "input_means", means)
        object.__setattr__(self, "input_stds", stds)
        object.__setattr__(self, "target_scale", float(self.target_scale))
        object.__setattr__(self, "constant_channels", tuple(int(i) for i in self.constant_channels))

    @property
    def d(self) -> int:
        return self.input_means.shape[0]

    def standardize(self, u) -> np.ndarray:
        return (np.asarray(u, dtype=float) - self.input_means) / self.input_stds

    def scale_target(self, y_raw):
        """Raw target -> transformed units (zero readings clipped to ``zero_floor``)."""
        y_raw = np.asarray(y_raw, dtype=float)
        if np.any(y_raw < 0):
            idx = int(np.argmax(y_raw < 0))
            raise ValueError(f"raw target must be non-negative (index {idx} is {y_raw.flat[idx]})")
        z = np.maximum(y_raw / self.target_scale, self.zero_floor)
        return transform_forward(z)

    def unscale_target(self, y):
        """Transformed units -> raw units."""
        return transform_inverse(y) * self.target_scale

    def to_dict(self) -> dict:
        return {
            "target_scale": self.target_scale,
            "input_means": [float(v) for v in self.input_means],
            "input_stds": [float(v) for v in self.input_stds],
            "constant_channels": list(self.constant_channels),
            "zero_floor": self.zero_floor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PreprocessStats:
        return cls(
            target_scale=data["target_scale"],
            input_means=data["input_means"],
            input_stds=data["input_stds"],
            constant_channels=tuple(data.get("constant_channels", ())),
            zero_floor=data.get("zero_floor", ZERO_FLOOR),
        )


def fit_preprocess(train_raw_target, train_inputs, target_scale: float | None = None,
                   zero_floor: float = ZERO_FLOOR) -> PreprocessStats:
    """Compute the frozen training-set statistics.

    Population standard deviations are used throughout. A constant input
    channel keeps its mean but gets a unit std and is listed in
    ``constant_channels``. ``target_scale`` overrides the data-derived scale
    (used when the target is already known to live on a fixed scale, e.g.
    data simulated directly in transformed units).
    """
    y = _as_float_array(train_raw_target, "target").reshape(-1)
    u = _as_float_array(train_inputs, "inputs")
    if u.ndim == 1:
        u = u[:, None]
    if y.size < 2 or u.shape[0] < 2:
        raise ValueError("fit_preprocess needs at least 2 samples")
    if target_scale is None:
        target_scale = float(np.std(y))
        if not target_scale > 0:
            raise ValueError("target is constant on the training set; cannot scale it")
    means = u.mean(axis=0)
    stds = u.std(axis=0)
    constant = tuple(int(i) for i in np.flatnonzero(~(stds > 0)))
    if constant:
        warnings.warn(f"constant input channel(s) {list(constant)}: std set to 1", PreprocessWarning,
                      stacklevel=2)
        stds = stds.copy()
        stds[list(constant)] = 1.0
    return PreprocessStats(target_scale, means, stds, constant, zero_floor)


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    t0: float
    dt: float
    y_raw: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        y_raw = _as_float_array(self.y_raw, "raw target").reshape(-1)
        y = _as_float_array(self.y, "target").reshape(-1)
        if y.shape != y_raw.shape:
            raise ValueError("raw and transformed target lengths differ")
        y_raw.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "y_raw", y_raw)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_raw(cls, t0: float, dt: float, y_raw, stats: PreprocessStats) -> ObservationSeries:
        return cls(t0, dt, y_raw, stats.scale_target(y_raw))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def slice(self, start: int, stop: int) -> ObservationSeries:
        return ObservationSeries(self.t0 + start * self.dt, self.dt, self.y_raw[start:stop],
                                 self.y[start:stop])


def check_aligned(inputs: InputSeries, obs: ObservationSeries) -> None:
    if inputs.n != obs.n:
        raise ValueError(f"inputs have {inputs.n} samples but observations have {obs.n}")
    if abs(inputs.dt - obs.dt) > 1e-9 * inputs.dt or abs(inputs.t0 - obs.t0) > 1e-9 * inputs.dt:
        raise ValueError("inputs and observations are on different time grids")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Trainable parameters in standardized-input, transformed-target units.

    Flat vector layout (used by the optimizer and the kernels):
    ``[a_1..a_d, b, c_1..c_d, d_off, lambda_raw]``.
    """

    a: np.ndarray
    b: float
    c: np.ndarray
    d_off: float
    lambda_raw: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        c = np.array(self.c, dtype=float).reshape(-1)
        if a.shape != c.shape:
            raise ValueError("mean and volatility weight vectors must have equal length")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "d_off", float(self.d_off))
        object.__setattr__(self, "lambda_raw", float(self.lambda_raw))

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def n_params(self) -> int:
        return 2 * self.d + 3

    @property
    def lam(self) -> float:
        return softplus(self.lambda_raw)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, [self.b], self.c, [self.d_off, self.lambda_raw]])

    @classmethod
    def from_vector(cls, theta) -> ModelParams:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size < 3 or (theta.size - 3) % 2:
            raise ValueError(f"parameter vector of length {theta.size} is not 2d+3")
        d = (theta.size - 3) // 2
        return cls(theta[:d], theta[d], theta[d + 1:2 * d + 1], theta[2 * d + 1], theta[2 * d + 2])

    @classmethod
    def constant(cls, d: int, mu: float, sigma: float, lam: float) -> ModelParams:
        """Input-independent model (zero weights)."""
        return cls(np.zeros(d), mu, np.zeros(d), softplus_inverse(sigma), softplus_inverse(lam))

    def to_dict(self) -> dict:
        return {
            "a": [float(v) for v in self.a],
            "b": self.b,
            "c": [float(v) for v in self.c],
            "d_off": self.d_off,
            "lambda_raw": self.lambda_raw,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ModelParams:
        return cls(data["a"], data["b"], data["c"], data["d_off"], data["lambda_raw"])

    def in_raw_input_units(self, stats: PreprocessStats) -> tuple[np.ndarray, float, np.ndarray, float]:
        """Weights/intercepts re-expressed against unstandardized inputs."""
        a = self.a / stats.input_stds
        c = self.c / stats.input_stds
        return a, self.b - float(a @ stats.input_means), c, self.d_off - float(c @ stats.input_means)


@dataclass(frozen=True, eq=False)
class Model:
    """Fitted parameters bundled with everything needed to apply them."""

    params: ModelParams
    stats: PreprocessStats
    channel_names: tuple[str, ...]
    dt: float
    target_name: str = "pm"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.channel_names)
        if not (len(names) == self.params.d == self.stats.d):
            raise ValueError(
                f"dimension mismatch: {len(names)} channels, {self.params.d} weights, "
                f"{self.stats.d} preprocessing entries")
        object.__setattr__(self, "channel_names", names)
