"""Loss, optimizer, training loop, evaluation and gradient checking."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidLabelError, NumericError, ShapeMismatchError
from .layers import ModelConfig, param_shapes
from .model import Network, init_params
from .rng import Stream, make_rng
from .tensor import Tensor

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    validation_split: float = 0.2
    shuffle: bool = True
    epochs: int = 20
    batch_size: int = 32
    loss: str = "binary_crossentropy"
    optimizer: str = "adam"
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.validation_split < 1.0:
            raise InvalidArgumentError(f"validation_split must be in [0, 1), got {self.validation_split}")
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss != "binary_crossentropy" or self.optimizer != "adam":
            raise InvalidArgumentError("only binary_crossentropy loss with adam is supported")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# loss


def _as_labels(target, shape) -> np.ndarray:
    y = np.asarray(target.array if isinstance(target, Tensor) else target, dtype=np.float64)
    if y.size == math.prod(shape):
        y = y.reshape(shape)
    else:
        raise ShapeMismatchError(f"targets shape {list(y.shape)} != predictions {list(shape)}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InvalidLabelError("targets must be 0 or 1")
    return y


def bce_loss(pred: Tensor, target) -> float:
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7]."""
    y = _as_labels(target, pred.shape)
    p = np.clip(pred.array, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_grad(pred: Tensor, target) -> Tensor:
    y = _as_labels(target, pred.shape)
    p = np.clip(pred.array, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return Tensor.wrap((p - y) / (p * (1.0 - p)) / p.shape[0])


# ---------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    m: Tensor
    v: Tensor
    t: int = 0

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdamState":
        return cls(Tensor.wrap(np.zeros(param.shape)), Tensor.wrap(np.zeros(param.shape)), 0)


def adam_step(param: Tensor, grad: Tensor, state: AdamState, lr: float) -> tuple[Tensor, AdamState]:
    """One bias-corrected ADAM update, applied to ``param`` and ``state`` in place."""
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeMismatchError(f"adam: grad {list(grad.shape)} / param {list(param.shape)} mismatch")
    g = grad.array
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradient; adam step aborted")
    state.t += 1
    m, v = state.m.array, state.v.array
    m *= BETA1
    m += (1.0 - BETA1) * g
    v *= BETA2
    v += (1.0 - BETA2) * (g * g)
    m_hat = m / (1.0 - BETA1 ** state.t)
    v_hat = v / (1.0 - BETA2 ** state.t)
    param.array[...] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return param, state


class Adam:
    """ADAM over a named parameter dict; every parameter shares one step count."""

    def __init__(self, states: dict[str, AdamState] | None = None):
        self.states: dict[str, AdamState] = dict(states or {})

    @property
    def t(self) -> int:
        return next(iter(self.states.values())).t if self.states else 0

    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor], lr: float) -> None:
        for name, g in grads.items():
            if not np.isfinite(g.array).all():
                raise NumericError(f"non-finite gradient for {name}; adam step aborted")
        for name, p in params.items():
            state = self.states.get(name)
            if state is None:
                state = self.states[name] = AdamState.zeros_like(p)
            adam_step(p, grads[name], state, lr)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def validation_split(labels: Sequence[int], fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_idx, val_idx).

    The validation size is exactly ``round(fraction * N)``; per-class shares
    use largest remainders, so each class is within one of its quota.
    """
    labels = np.asarray(labels)
    n = len(labels)
    classes = sorted(set(labels.tolist()))
    total = round_half_up(fraction * n)
    quotas = {c: fraction * int((labels == c).sum()) for c in classes}
    counts = {c: int(math.floor(q)) for c, q in quotas.items()}
    leftover = total - sum(counts.values())
    by_remainder = sorted(classes, key=lambda c: (-(quotas[c] - counts[c]), c))
    for c in by_remainder[:leftover]:
        counts[c] += 1
    rng = make_rng(seed, Stream.VALIDATION_SPLIT)
    val = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        val.extend(idx[rng.permutation(len(idx))[: counts[c]]].tolist())
    val_idx = np.array(sorted(val), dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(n), val_idx)
    return train_idx, val_idx


def _stack(data) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.features.array for s in data])
    y = np.array([s.label for s in data], dtype=np.float64)
    return x, y


def _check_inputs(config: ModelConfig, x: np.ndarray):
    if x.shape[1:] != config.input_shape:
        raise InvalidArgumentError(
            f"sample shape {list(x.shape[1:])} does not match model input {list(config.input_shape)}"
        )


def _predict_arrays(net: Network, x: np.ndarray, batch_size: int) -> np.ndarray:
    preds = [net.predict(Tensor.wrap(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
    return np.concatenate(preds)


def fit(
    config: ModelConfig,
    data: Sequence,
    train_cfg: TrainConfig,
    params: dict[str, Tensor] | None = None,
    optimizer: Adam | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[dict[str, Tensor], TrainHistory]:
    """Train ``config`` on ``data`` (a list of :class:`~elaspoof.ela.Sample`).

    ``params`` defaults to a fresh seeded initialisation; pass ``optimizer``
    to keep hold of the ADAM moments afterwards.
    """
    if len(data) == 0:
        raise InvalidArgumentError("no training data")
    x, y = _stack(data)
    _check_inputs(config, x)
    if train_cfg.validation_split > 0 and len(set(y.tolist())) < 2:
        raise InvalidArgumentError("validation split needs at least one sample per class")
    train_idx, val_idx = validation_split(y, train_cfg.validation_split, train_cfg.seed)
    if train_cfg.validation_split > 0 and len(val_idx) == 0:
        raise InvalidArgumentError(f"{len(y)} samples are too few for validation_split={train_cfg.validation_split}")
    if len(train_idx) == 0:
        raise InvalidArgumentError("validation split leaves no training samples")

    if params is None:
        params = init_params(config, train_cfg.seed)
    net = Network(config, params)
    optimizer = optimizer if optimizer is not None else Adam()
    shuffle_rng = make_rng(train_cfg.seed, Stream.SHUFFLE)
    dropout_rng = make_rng(train_cfg.seed, Stream.DROPOUT)
    bs = train_cfg.batch_size
    history = TrainHistory()

    for epoch in range(1, train_cfg.epochs + 1):
        order = train_idx[shuffle_rng.permutation(len(train_idx))] if train_cfg.shuffle else train_idx
        loss_sum = 0.0
        correct = 0
        for k, start in enumerate(range(0, len(order), bs)):
            idx = order[start:start + bs]
            yb = y[idx].reshape(-1, 1)
            pred = net.forward(Tensor.wrap(x[idx]), training=True, rng=dropout_rng)
            loss = bce_loss(pred, yb)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {k}")
            grads = net.backward(bce_grad(pred, yb))
            try:
                optimizer.step(params, grads, train_cfg.learning_rate)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {k}: {exc}") from None
            loss_sum += loss * len(idx)
            correct += int(((pred.array >= 0.5) == (yb == 1.0)).sum())
        if len(val_idx):
            p_val = _predict_arrays(net, x[val_idx], bs)
            val_loss = bce_loss(Tensor.wrap(p_val.reshape(-1, 1)), y[val_idx].reshape(-1, 1))
            val_acc = float(((p_val >= 0.5) == (y[val_idx] == 1.0)).mean())
        else:
            val_loss = val_acc = float("nan")
        record = EpochRecord(epoch, loss_sum / len(order), correct / len(order), val_loss, val_acc)
        history.records.append(record)
        log.info(
            "epoch %d/%d loss=%.4f acc=%.4f val_loss=%.4f val_acc=%.4f",
            epoch, train_cfg.epochs, record.train_loss, record.train_accuracy, val_loss, val_acc,
        )
        if on_epoch is not None:
            on_epoch(record)
    return params, history


def evaluate(params: dict[str, Tensor], config: ModelConfig, data: Sequence,
             batch_size: int = 32) -> tuple[float, np.ndarray]:
    """Inference-mode mean BCE and per-sample P(fake)."""
    if len(data) == 0:
        raise InvalidArgumentError("no evaluation data")
    x, y = _stack(data)
    _check_inputs(config, x)
    net = Network(config, params)
    preds = _predict_arrays(net, x, batch_size)
    loss = bce_loss(Tensor.wrap(preds.reshape(-1, 1)), y.reshape(-1, 1))
    return loss, preds


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    checked: int
    dead: list[tuple[str, int]]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < self.tolerance


def _coordinate_order(sizes: dict[str, int], rng, limit: int):
    """Yield up to ``limit`` distinct (name, flat index) pairs in seeded random order."""
    names = list(sizes)
    offsets = np.cumsum([0] + [sizes[n] for n in names])
    total = int(offsets[-1])
    picked = rng.choice(total, size=min(total, limit), replace=False)
    for g in picked:
        k = int(np.searchsorted(offsets, g, side="right")) - 1
        yield names[k], int(g - offsets[k])


def gradient_check(
    config: ModelConfig,
    sample,
    tolerance: float = 1e-5,
    params: dict[str, Tensor] | None = None,
    seed: int = 0,
    n_coords: int = 200,
    h: float = 1e-6,
    training: bool = True,
) -> GradCheckReport:
    """Compare backprop gradients of BCE(network) against central differences.

    Dropout masks are drawn once and replayed for every perturbed evaluation.
    Coordinates whose analytic gradient is exactly zero and whose numeric
    estimate is below 1e-8 are reported as dead and left out of the ratio.
    The ratio's denominator is clamped at the difference quotient's roundoff
    resolution, ``1e5 * eps * max(|loss|, 1) / h``, so gradients smaller than
    that are held to an absolute rather than relative bound.
    """
    if params is None:
        params = init_params(config, seed)
    params = {k: v.copy() for k, v in params.items()}
    net = Network(config, params)
    x = Tensor.wrap(sample.features.array[None])
    y = np.array([[float(sample.label)]])
    rng = make_rng(seed, Stream.GRADCHECK)

    pred = net.forward(x, training=training, rng=rng)
    masks = dict(net.dropout_masks)
    floor = 1e5 * np.finfo(np.float64).eps * max(bce_loss(pred, y), 1.0) / h
    grads = net.backward(bce_grad(pred, y))

    def loss_at() -> float:
        out = net.forward(x, training=training, masks=masks)
        return bce_loss(out, y)

    sizes = {name: int(np.prod(shape)) for name, shape in param_shapes(config).items()}
    per_param: dict[str, float] = {}
    dead: list[tuple[str, int]] = []
    checked = 0
    # Dead coordinates do not count towards n_coords; draw extra to replace them.
    for name, i in _coordinate_order(sizes, rng, 10 * n_coords):
        if checked >= n_coords:
            break
        flat = params[name].data
        orig = flat[i]
        flat[i] = orig + h
        plus = loss_at()
        flat[i] = orig - h
        minus = loss_at()
        flat[i] = orig
        numeric = (plus - minus) / (2.0 * h)
        a = grads[name].data[i]
        if a == 0.0 and abs(numeric) < 1e-8:
            dead.append((name, i))
            continue
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        per_param[name] = max(per_param.get(name, 0.0), rel)
        checked += 1
    return GradCheckReport(max(per_param.values(), default=0.0), per_param, checked, dead, tolerance)
