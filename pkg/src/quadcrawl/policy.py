"""Pose -> velocity regression with a small tanh MLP trained by plain SGD.

Inputs and targets are z-scored with statistics from the training split;
the reported MSE is in that normalized space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import TorsoPose, World
from .datagen import Dataset

MODEL_FORMAT_VERSION = 1
PAPER_HIDDEN = (256, 1024, 1024, 1024, 1024, 256)
DESK_HIDDEN = (64, 128, 128, 64)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class MlpModel:
    """Fully connected net; ``weights[i]`` has shape (fan_in, fan_out)."""

    layer_sizes: tuple
    weights: list
    biases: list
    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(4))
    output_mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    output_scale: np.ndarray = field(default_factory=lambda: np.ones(4))

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer transition")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expect}")
        for name in ("input_mean", "input_scale", "output_mean", "output_scale"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            size = self.layer_sizes[0] if name.startswith("input") else self.layer_sizes[-1]
            if arr.shape != (size,):
                raise ValueError(f"{name} must have {size} entries")
            setattr(self, name, arr)
        if np.any(self.input_scale <= 0) or np.any(self.output_scale <= 0):
            raise ValueError("normalization scales must be positive")

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_mean.copy(),
            self.input_scale.copy(),
            self.output_mean.copy(),
            self.output_scale.copy(),
        )


def init_model(hidden=DESK_HIDDEN, seed: int = 0, inputs: int = 4, outputs: int = 4) -> MlpModel:
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    sizes = (inputs, *hidden, outputs)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return MlpModel(sizes, weights, biases)


def zero_model(hidden=DESK_HIDDEN) -> MlpModel:
    sizes = (4, *hidden, 4)
    return MlpModel(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])], [np.zeros(b) for b in sizes[1:]])


def _forward_normalized(model: MlpModel, z: np.ndarray):
    """Activations of every layer for normalized inputs ``z`` (B, in)."""
    acts = [z]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        pre = acts[-1] @ w + b
        acts.append(pre if i == last else np.tanh(pre))
    return acts


def mlp_forward(model: MlpModel, pose_input) -> np.ndarray:
    """Velocity for one pose (4,) or a batch (B, 4), in physical units."""
    x = np.asarray(pose_input, dtype=float)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"expected input with {model.layer_sizes[0]} columns, got shape {x.shape}")
    z = (x2 - model.input_mean) / model.input_scale
    y = _forward_normalized(model, z)[-1] * model.output_scale + model.output_mean
    return y[0] if single else y


def _batch_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2:
        x, y = (np.asarray(a, dtype=float) for a in batch)
    elif isinstance(batch, Dataset):
        x, y = batch.inputs, batch.targets
    else:
        batch = list(batch)
        if not batch:
            raise ValueError("empty batch")
        x = np.array([s.input for s in batch])
        y = np.array([s.target for s in batch])
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty batch")
    return x, y


def loss_and_gradient(model: MlpModel, batch):
    """Normalized-space MSE and its gradient.

    ``batch`` is a list of :class:`VelocitySample`, a :class:`Dataset`, or an
    ``(inputs, targets)`` pair. Returns ``(mse, (weight_grads, bias_grads))``.
    """
    x, y = _batch_arrays(batch)
    z = (x - model.input_mean) / model.input_scale
    t = (y - model.output_mean) / model.output_scale
    acts = _forward_normalized(model, z)
    err = acts[-1] - t
    n, k = err.shape
    mse = float(np.mean(err * err))
    delta = 2.0 * err / (n * k)
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return mse, (gw, gb)


def mse(model: MlpModel, dataset: Dataset) -> float:
    if len(dataset) == 0:
        return float("nan")
    z = (dataset.inputs - model.input_mean) / model.input_scale
    t = (dataset.targets - model.output_mean) / model.output_scale
    err = _forward_normalized(model, z)[-1] - t
    return float(np.mean(err * err))


def raw_mse(model: MlpModel, dataset: Dataset) -> float:
    if len(dataset) == 0:
        return float("nan")
    return float(np.mean((mlp_forward(model, dataset.inputs) - dataset.targets) ** 2))


def split_dataset(dataset: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition by trajectory id into (train, val, test)."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    ids = np.unique(dataset.traj_ids)
    n = ids.size
    if n < 3:
        raise ValueError(f"need at least 3 trajectories to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(ids)
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_val = min(max(n_val, 1 if fractions[1] > 0 else 0), n - 2)
    n_test = min(max(n_test, 1 if fractions[2] > 0 else 0), n - 1 - n_val)
    n_train = n - n_val - n_test
    groups = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
    return tuple(dataset.subset(np.isin(dataset.traj_ids, g)) for g in groups)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = DESK_HIDDEN
    batch_size: int = 1024
    epochs: int = 20
    learning_rate: float = 0.5
    # multiply the learning rate by this after every epoch; 1.0 keeps it constant
    lr_decay: float = 1.0
    seed: int = 0
    fractions: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0 or not self.lr_decay > 0:
            raise ValueError("learning_rate and lr_decay must be positive")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "seed": self.seed,
            "fractions": list(self.fractions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {"hidden", "batch_size", "epochs", "learning_rate", "lr_decay", "seed", "fractions"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        kw = dict(data)
        for key in ("hidden", "fractions"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class TrainResult:
    model: MlpModel
    history: list
    best_epoch: int
    test_mse: float
    splits: tuple

    def __iter__(self):
        # allows ``model, history = train(...)``
        return iter((self.model, self.history))


def _normalization(train: Dataset):
    mean_x = train.inputs.mean(axis=0)
    mean_y = train.targets.mean(axis=0)
    std_x = train.inputs.std(axis=0)
    std_y = train.targets.std(axis=0)
    # constant columns (fixed z in a planar set, say) get unit scale
    std_x = np.where(std_x > 1e-12, std_x, 1.0)
    std_y = np.where(std_y > 1e-12, std_y, 1.0)
    return mean_x, std_x, mean_y, std_y


def train(dataset: Dataset, config: TrainConfig | None = None, splits=None) -> TrainResult:
    """Plain mini-batch SGD; keeps the parameters with the best validation MSE.

    ``history`` holds ``(epoch, train_mse, val_mse)`` with epoch 0 being the
    untrained model. Training MSE is measured on the full split after each
    epoch.
    """
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    train_set, val_set, test_set = splits if splits is not None else split_dataset(dataset, config.fractions, config.seed)
    model = init_model(config.hidden, config.seed)
    mx, sx, my, sy = _normalization(train_set)
    model.input_mean, model.input_scale, model.output_mean, model.output_scale = mx, sx, my, sy

    rng = np.random.default_rng(config.seed + 1)
    x_all = (train_set.inputs - mx) / sx
    y_all = (train_set.targets - my) / sy
    plain = model.copy()
    plain.input_mean, plain.input_scale = np.zeros(4), np.ones(4)
    plain.output_mean, plain.output_scale = np.zeros(4), np.ones(4)

    def evaluate(m):
        tr = mse(m, train_set)
        va = mse(m, val_set) if len(val_set) else tr
        return tr, va

    history = [(0, *evaluate(model))]
    best = (history[0][2], 0, model.copy())
    lr = config.learning_rate
    n = x_all.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            loss, (gw, gb) = loss_and_gradient(plain, (x_all[idx], y_all[idx]))
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b} (lr {lr:g})")
            for i in range(len(plain.weights)):
                plain.weights[i] -= lr * gw[i]
                plain.biases[i] -= lr * gb[i]
        model.weights, model.biases = plain.weights, plain.biases
        tr, va = evaluate(model)
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch} (lr {lr:g})")
        history.append((epoch, tr, va))
        if va < best[0]:
            best = (va, epoch, model.copy())
        lr *= config.lr_decay
    final = best[2]
    test = mse(final, test_set) if len(test_set) else float("nan")
    return TrainResult(final, history, best[1], test, (train_set, val_set, test_set))


def guard_velocity(velocity, pose, world: World) -> np.ndarray:
    """Clamp to the velocity box and drop components pushing x, y or z past the position box.

    Training poses all lie inside the box, so outside it the network is
    extrapolating; this keeps a closed loop from drifting further out.
    Yaw wraps and is left alone.
    """
    v = np.clip(np.asarray(velocity, dtype=float).reshape(4), world.state_lower[4:], world.state_upper[4:])
    p = pose.as_array() if isinstance(pose, TorsoPose) else np.asarray(pose, dtype=float).reshape(4)
    for j in range(3):
        if (p[j] >= world.state_upper[j] and v[j] > 0) or (p[j] <= world.state_lower[j] and v[j] < 0):
            v[j] = 0.0
    return v


def predict_velocity(model: MlpModel, pose, world: World | None = None) -> np.ndarray:
    """Network velocity passed through :func:`guard_velocity`."""
    world = world or World()
    x = pose.as_array() if isinstance(pose, TorsoPose) else np.asarray(pose, dtype=float)
    return guard_velocity(mlp_forward(model, x), x, world)


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "input_mean": model.input_mean.tolist(),
        "input_scale": model.input_scale.tolist(),
        "output_mean": model.output_mean.tolist(),
        "output_scale": model.output_scale.tolist(),
    }


def model_from_dict(data: dict) -> MlpModel:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    sizes = data["layer_sizes"]
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(data["weights"], sizes[:-1], sizes[1:])]
    return MlpModel(
        sizes,
        weights,
        data["biases"],
        data["input_mean"],
        data["input_scale"],
        data["output_mean"],
        data["output_scale"],
    )


def save_model(model: MlpModel, path) -> None:
    """JSON text; floats are written with round-trip precision."""
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def write_history(history, path, comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines.append("epoch,train_mse,val_mse")
    lines += [f"{e},{tr!r},{va!r}" for e, tr, va in history]
    Path(path).write_text("\n".join(lines) + "\n")
