"""Maximum-likelihood fitting with shuffled minibatch Adam and validation checkpointing.

The likelihood factorizes over one-step transitions conditioned on the
measured previous value, so a minibatch is any subset of transitions and
shuffling them is exact.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .core import InputSeries, ModelParams, ObservationSeries, PreprocessStats, check_aligned, \
    softplus_inverse
from .ou_process import VAR_FLOOR, decay_terms

log = logging.getLogger(__name__)


class FitDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, params: ModelParams, detail: str = ""):
        self.epoch = epoch
        self.batch = batch
        self.params = params
        msg = f"training diverged at epoch {epoch}, batch {batch}"
        if detail:
            msg += f" ({detail})"
        msg += f"; parameters at failure: {params.to_dict()}"
        super().__init__(msg)


class NonFiniteLossError(ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite likelihood term at example {index}")


@dataclass(frozen=True)
class TransitionExample:
    u_std: np.ndarray
    y_prev: float
    y_next: float
    dt: float


@dataclass(frozen=True, eq=False)
class TransitionSet:
    """A batch of transition examples stored column-wise.

    Row ``i`` pairs the standardized input at the start of the interval with
    the measured values at both ends. Indexing with an int gives a
    :class:`TransitionExample`; with a slice or index array, a sub-set.
    """

    u_std: np.ndarray
    y_prev: np.ndarray
    y_next: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u_std, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        cols = [np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=float), (u.shape[0],)))
                for v in (self.y_prev, self.y_next, self.dt)]
        for name, arr in zip(("u_std", "y_prev", "y_next", "dt"), [u, *cols]):
            bad = ~np.isfinite(arr)
            if bad.any():
                raise ValueError(f"{name} is not finite at example {int(np.argwhere(bad)[0][0])}")
        if np.any(cols[2] <= 0):
            raise ValueError(f"dt must be positive (example {int(np.argmax(cols[2] <= 0))})")
        object.__setattr__(self, "u_std", u)
        object.__setattr__(self, "y_prev", cols[0])
        object.__setattr__(self, "y_next", cols[1])
        object.__setattr__(self, "dt", cols[2])

    def __len__(self) -> int:
        return self.y_prev.shape[0]

    @property
    def d(self) -> int:
        return self.u_std.shape[1]

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return TransitionExample(self.u_std[key].copy(), float(self.y_prev[key]),
                                     float(self.y_next[key]), float(self.dt[key]))
        return TransitionSet(self.u_std[key], self.y_prev[key], self.y_next[key], self.dt[key])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_examples(cls, examples) -> TransitionSet:
        examples = list(examples)
        if not examples:
            raise ValueError("no transition examples given")
        return cls(np.stack([np.asarray(e.u_std, dtype=float) for e in examples]),
                   [e.y_prev for e in examples], [e.y_next for e in examples],
                   [e.dt for e in examples])

    @classmethod
    def concat(cls, sets) -> TransitionSet:
        sets = list(sets)
        return cls(np.concatenate([s.u_std for s in sets]), np.concatenate([s.y_prev for s in sets]),
                   np.concatenate([s.y_next for s in sets]), np.concatenate([s.dt for s in sets]))


def _as_set(batch) -> TransitionSet:
    if isinstance(batch, TransitionSet):
        return batch
    if isinstance(batch, TransitionExample):
        return TransitionSet.from_examples([batch])
    return TransitionSet.from_examples(batch)


def build_transitions(inputs: InputSeries, obs: ObservationSeries,
                      stats: PreprocessStats) -> TransitionSet:
    """One example per consecutive pair of samples (``N - 1`` in total)."""
    check_aligned(inputs, obs)
    u_std = inputs.standardized(stats)
    y = obs.y
    return TransitionSet(u_std[:-1], y[:-1], y[1:], np.full(inputs.n - 1, inputs.dt))


def split_validation(transitions: TransitionSet, fraction: float = 0.15,
                     indices=None) -> tuple[TransitionSet, TransitionSet]:
    """Hold out the last contiguous ``fraction`` (or the given ``indices``) for validation."""
    n = len(transitions)
    if indices is not None:
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(indices, dtype=int)] = True
    else:
        if not 0 < fraction < 1:
            raise ValueError(f"validation fraction must be in (0, 1), got {fraction}")
        n_val = max(1, int(round(fraction * n)))
        mask = np.zeros(n, dtype=bool)
        mask[n - n_val:] = True
    if mask.all() or not mask.any():
        raise ValueError("validation split leaves an empty train or validation set")
    return transitions[np.flatnonzero(~mask)], transitions[np.flatnonzero(mask)]


# --- loss ------------------------------------------------------------------


def nll_terms(params: ModelParams, batch, var_floor: float = VAR_FLOOR) -> np.ndarray:
    ts = _as_set(batch)
    if ts.d != params.d:
        raise ValueError(f"batch has {ts.d} channels, parameters expect {params.d}")
    return kernels.nll_terms(params.to_vector(), ts.u_std, ts.y_prev, ts.y_next, ts.dt, var_floor)


def nll_loss(params: ModelParams, batch, var_floor: float = VAR_FLOOR) -> float:
    """Sum over the batch of ``log V + (y_next - m)^2 / V`` (constants dropped)."""
    terms = nll_terms(params, batch, var_floor)
    if terms.size == 0:
        raise ValueError("empty batch")
    bad = ~np.isfinite(terms)
    if bad.any():
        raise NonFiniteLossError(int(np.argmax(bad)))
    return float(terms.sum())


def nll_gradient(params: ModelParams, batch, var_floor: float = VAR_FLOOR) -> np.ndarray:
    """Analytic gradient of :func:`nll_loss` in the flat ``[a, b, c, d_off, lambda_raw]`` layout."""
    ts = _as_set(batch)
    if len(ts) == 0:
        raise ValueError("empty batch")
    if ts.d != params.d:
        raise ValueError(f"batch has {ts.d} channels, parameters expect {params.d}")
    loss, grad = kernels.nll_loss_grad(params.to_vector(), ts.u_std, ts.y_prev, ts.y_next, ts.dt,
                                       var_floor)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        terms = nll_terms(params, ts, var_floor)
        bad = np.flatnonzero(~np.isfinite(terms))
        raise NonFiniteLossError(int(bad[0]) if bad.size else 0)
    return grad


# --- fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 512
    learning_rate: float = 1e-2
    seed: int = 0
    validation_fraction: float = 0.15
    early_stopping: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    var_floor: float = VAR_FLOOR

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(eq=False)
class FitReport:
    best_params: ModelParams
    train_loss_curve: np.ndarray
    val_loss_curve: np.ndarray
    best_epoch: int
    initial_val_loss: float
    final_params: ModelParams
    wall_time: float = field(default=0.0, compare=False)

    def curves_table(self) -> dict[str, np.ndarray]:
        return {
            "epoch": np.arange(self.train_loss_curve.size),
            "train_loss": self.train_loss_curve,
            "val_loss": self.val_loss_curve,
        }


def initial_params(train: TransitionSet, seed: int) -> ModelParams:
    """Start near a stationary fit: small random weights, empirical mean, unit reversion rate."""
    rng = np.random.default_rng(seed)
    d = train.d
    a = rng.normal(0.0, 0.01, d)
    c = rng.normal(0.0, 0.01, d)
    b = float(np.mean(train.y_next))
    decay, one_minus, gain = decay_terms(1.0, train.dt)
    resid = train.y_next - (train.y_prev * decay + b * one_minus)
    with np.errstate(over="ignore", invalid="ignore"):
        # absurd data gives inf here; the first epoch then reports divergence
        sigma0 = float(np.std(resid) / np.sqrt(np.mean(gain)))
    return ModelParams(a, b, c, softplus_inverse(max(sigma0, 1e-6)), softplus_inverse(1.0))


def _mean_loss(theta: np.ndarray, ts: TransitionSet, var_floor: float) -> float:
    terms = kernels.nll_terms(theta, ts.u_std, ts.y_prev, ts.y_next, ts.dt, var_floor)
    return float(terms.sum()) / len(ts)


def fit(train, validation, config: TrainConfig = TrainConfig(),
        init: ModelParams | None = None) -> FitReport:
    """Run ``config.epochs`` epochs and keep the best-validation parameters.

    Losses in the curves are per-example means so train and validation are
    comparable. With ``early_stopping`` off the final parameters are
    returned instead of the best-validation ones.
    """
    train, validation = _as_set(train), _as_set(validation)
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if train.d != validation.d:
        raise ValueError("train and validation sets have different channel counts")

    start_time = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    if init is None:
        init = initial_params(train, int(rng.integers(2**63)))
    elif init.d != train.d:
        raise ValueError(f"initial parameters have d={init.d}, data have d={train.d}")
    theta = init.to_vector().copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0

    initial_val = _mean_loss(theta, validation, config.var_floor)
    train_curve = np.empty(config.epochs)
    val_curve = np.empty(config.epochs)
    best_theta, best_val, best_epoch = theta.copy(), np.inf, -1
    n = len(train)

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        step, total, bad = kernels.adam_epoch(
            theta, m1, m2, step, train.u_std, train.y_prev, train.y_next, train.dt, perm,
            config.batch_size, config.learning_rate, config.beta1, config.beta2, config.eps,
            config.var_floor)
        if bad >= 0:
            raise FitDivergedError(epoch, int(bad), ModelParams.from_vector(theta),
                                   "non-finite loss or gradient")
        val = _mean_loss(theta, validation, config.var_floor)
        if not np.isfinite(val):
            raise FitDivergedError(epoch, -1, ModelParams.from_vector(theta),
                                   "non-finite validation loss")
        train_curve[epoch] = total / n
        val_curve[epoch] = val
        if val < best_val:
            best_theta, best_val, best_epoch = theta.copy(), val, epoch
        if epoch % 100 == 0 or epoch == config.epochs - 1:
            log.debug("epoch %d train %.6f val %.6f", epoch, train_curve[epoch], val)

    final = ModelParams.from_vector(theta)
    if not config.early_stopping:
        best_theta, best_epoch = theta.copy(), config.epochs - 1
    return FitReport(
        best_params=ModelParams.from_vector(best_theta),
        train_loss_curve=train_curve,
        val_loss_curve=val_curve,
        best_epoch=best_epoch,
        initial_val_loss=initial_val,
        final_params=final,
        wall_time=time.perf_counter() - start_time,
    )
