"""Convolutional-recurrent digit classifier and its training contract.

The network applies a shared 4-block convolutional stack to each of the 11
frames (time-distributed), aggregates the per-frame feature sequence with a
single recurrent layer, and classifies through a small fully-connected head
with a 10-way softmax. Training uses categorical cross-entropy with plain
SGD.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import EmptySplit, InvalidConfig, MissingClass, ShapeMismatch
from .rank import ensure_distribution
from .video import SEQUENCE_LEN, AugmentParams, KeypressSample, augment

N_CLASSES = 10


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description. Defaults reproduce the full-scale classifier."""

    input_size: int = 250
    seq_len: int = SEQUENCE_LEN
    conv_filters: tuple[int, ...] = (32, 64, 128, 256)
    conv_kernels: tuple[int, ...] = (3, 9, 3, 3)
    pool_size: int = 2
    dropout_rate: float = 0.1
    rnn_units: int = 128
    rnn_type: str = "lstm"  # 'gru' was assessed as an alternative
    mlp_layers: int = 4
    mlp_units: int = 64

    def __post_init__(self):
        if len(self.conv_filters) != len(self.conv_kernels):
            raise InvalidConfig("conv_filters and conv_kernels lengths differ")
        if self.rnn_type not in ("lstm", "gru"):
            raise InvalidConfig(f"unknown rnn_type {self.rnn_type!r}")
        if min(self.conv_filters) < 1 or self.rnn_units < 1 or self.mlp_units < 1:
            raise InvalidConfig("all layer sizes must be positive")
        size = self.input_size
        for _ in self.conv_filters:
            size = size // self.pool_size
            if size < 1:
                raise InvalidConfig(
                    f"pooling reduces {self.input_size}px input below 1px "
                    f"after {len(self.conv_filters)} blocks"
                )

    @property
    def feature_size(self) -> int:
        size = self.input_size
        for _ in self.conv_filters:
            size = size // self.pool_size
        return size * size * self.conv_filters[-1]

    @classmethod
    def small(cls, input_size: int = 64) -> "ModelConfig":
        """Half-width configuration for CI-scale runs."""
        return cls(input_size=input_size, conv_filters=(16, 32, 64, 128))


@dataclass(frozen=True)
class TrainConfig:
    """Loss is categorical cross-entropy, optimizer plain SGD.

    ``threads=1`` keeps CPU training bit-reproducible for a fixed seed;
    multi-threaded runs are faster but only metric-equivalent across runs.
    """

    learning_rate: float = 0.1
    batch_size: int = 16
    epochs: int = 70
    momentum: float = 0.0
    augmentation: AugmentParams | None = field(default_factory=AugmentParams)
    seed: int = 0
    threads: int | None = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainResult:
    model: "LrcnClassifier"
    history: list[EpochStats]
    best_epoch: int
    best_val_acc: float
    best_state: dict


class LrcnClassifier(nn.Module):
    """Time-distributed CNN + recurrent aggregation + dense head.

    ``forward`` returns class probabilities (softmax); the training loop uses
    the pre-softmax logits internally for a numerically stable loss.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        blocks: list[nn.Module] = []
        in_ch = 1
        for filters, kernel in zip(cfg.conv_filters, cfg.conv_kernels):
            blocks += [
                nn.Conv2d(in_ch, filters, kernel, padding="same"),
                nn.ReLU(),
                nn.MaxPool2d(cfg.pool_size),
            ]
            in_ch = filters
        blocks += [nn.Dropout(cfg.dropout_rate), nn.Flatten()]
        self.conv = nn.Sequential(*blocks)
        rnn_cls = nn.LSTM if cfg.rnn_type == "lstm" else nn.GRU
        self.rnn = rnn_cls(cfg.feature_size, cfg.rnn_units, batch_first=True)
        head: list[nn.Module] = []
        width = cfg.rnn_units
        for _ in range(cfg.mlp_layers):
            head += [nn.Linear(width, cfg.mlp_units), nn.ReLU()]
            width = cfg.mlp_units
        head.append(nn.Linear(width, N_CLASSES))
        self.head = nn.Sequential(*head)
        self._init_weights()

    def _init_weights(self) -> None:
        # Variance-preserving init; torch defaults leave this depth of
        # ReLU stack with gradients too small for plain SGD to train.
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
            elif isinstance(m, (nn.LSTM, nn.GRU)):
                for name, p in m.named_parameters():
                    if "weight_ih" in name:
                        nn.init.xavier_uniform_(p)
                    elif "weight_hh" in name:
                        nn.init.orthogonal_(p)
                    else:
                        nn.init.zeros_(p)

    def frame_features(self, frames: torch.Tensor) -> torch.Tensor:
        """Convolutional features for a batch of single frames (B, S, S)."""
        return self.conv(frames.unsqueeze(1))

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        b, t, h, w = x.shape
        feats = self.conv(x.reshape(b * t, 1, h, w)).reshape(b, t, -1)
        out, _ = self.rnn(feats)
        return self.head(out[:, -1])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(x), dim=-1)


def build_model(cfg: ModelConfig, seed: int | None = None) -> LrcnClassifier:
    if seed is not None:
        torch.manual_seed(seed)
    return LrcnClassifier(cfg)


def _check_sample(model: LrcnClassifier, sample: KeypressSample) -> None:
    expected = (model.cfg.seq_len, model.cfg.input_size, model.cfg.input_size)
    if sample.frames.shape != expected:
        raise ShapeMismatch(f"sample shape {sample.frames.shape} != model input {expected}")


def _stack(samples: list[KeypressSample]) -> tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([s.frames for s in samples]))
    y = torch.tensor([s.label for s in samples], dtype=torch.long)
    return x, y


def predict_digit(model: LrcnClassifier, sample: KeypressSample) -> np.ndarray:
    """Digit distribution for one sample (inference mode, dropout off)."""
    _check_sample(model, sample)
    model.eval()
    with torch.no_grad():
        probs = model(torch.from_numpy(sample.frames).unsqueeze(0))[0]
    return ensure_distribution(probs.numpy().astype(np.float64))


def predict_batch(
    model: LrcnClassifier, samples: list[KeypressSample], batch_size: int = 32
) -> np.ndarray:
    """Digit distributions for many samples, shape (n, 10)."""
    for s in samples:
        _check_sample(model, s)
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            x, _ = _stack(samples[start : start + batch_size])
            chunks.append(model(x).numpy().astype(np.float64))
    return np.concatenate(chunks) if chunks else np.zeros((0, N_CLASSES))


def _augmented_pool(
    samples: list[KeypressSample], params: AugmentParams, seed: int
) -> list[KeypressSample]:
    """Extend the training pool with randomly transformed copies."""
    n_extra = int(round(params.synthetic_fraction * len(samples)))
    if n_extra == 0:
        return list(samples)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(samples), size=n_extra)
    extra = [
        augment(samples[int(i)], params, rng.integers(0, 2**63)) for i in picks
    ]
    return list(samples) + extra


def train(
    model: LrcnClassifier,
    train_samples: list[KeypressSample],
    val_samples: list[KeypressSample],
    cfg: TrainConfig,
) -> TrainResult:
    """Train in place; returns the final model plus the best-validation state."""
    if cfg.epochs < 1:
        raise InvalidConfig("epochs must be >= 1")
    if not train_samples or not val_samples:
        raise EmptySplit("train and validation sets must be non-empty")
    for name, split in (("train", train_samples), ("validation", val_samples)):
        present = {s.label for s in split}
        if None in present:
            raise MissingClass(f"{name} split contains unlabeled samples")
        missing = set(range(N_CLASSES)) - present
        if missing:
            raise MissingClass(f"{name} split lacks digits {sorted(missing)}")
    for s in train_samples + val_samples:
        _check_sample(model, s)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    pool = (
        _augmented_pool(train_samples, cfg.augmentation, cfg.seed)
        if cfg.augmentation is not None
        else list(train_samples)
    )
    x_train, y_train = _stack(pool)
    x_val, y_val = _stack(val_samples)
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    loss_fn = nn.CrossEntropyLoss()

    prior_threads = torch.get_num_threads()
    if cfg.threads is not None:
        torch.set_num_threads(cfg.threads)
    try:
        return _fit(model, optimizer, loss_fn, x_train, y_train, x_val, y_val, cfg, rng)
    finally:
        torch.set_num_threads(prior_threads)


def _fit(model, optimizer, loss_fn, x_train, y_train, x_val, y_val, cfg, rng) -> TrainResult:
    history: list[EpochStats] = []
    best_epoch, best_val, best_state = 0, -1.0, None
    n = x_train.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(order[start : start + cfg.batch_size].copy())
            xb, yb = x_train[idx], y_train[idx]
            optimizer.zero_grad()
            logits = model.logits(xb)
            loss = loss_fn(logits, yb)
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach()) * xb.shape[0]
            correct += int((logits.detach().argmax(dim=1) == yb).sum())
        model.eval()
        with torch.no_grad():
            val_correct = 0
            for start in range(0, x_val.shape[0], 64):
                logits = model.logits(x_val[start : start + 64])
                val_correct += int((logits.argmax(dim=1) == y_val[start : start + 64]).sum())
        stats = EpochStats(
            epoch=epoch,
            train_loss=total_loss / n,
            train_acc=correct / n,
            val_acc=val_correct / x_val.shape[0],
        )
        history.append(stats)
        if stats.val_acc > best_val:
            best_epoch, best_val = epoch, stats.val_acc
            best_state = copy.deepcopy(model.state_dict())
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_val_acc=best_val,
        best_state=best_state,
    )


# --- persistence ------------------------------------------------------------


def save_model(
    model: LrcnClassifier, path: str | Path, metadata: dict | None = None
) -> None:
    """Serialize weights with the architecture config embedded."""
    payload = {
        "config": asdict(model.cfg),
        "state_dict": model.state_dict(),
        "metadata": dict(metadata or {}),
    }
    # Defaults left implicit elsewhere are pinned here for auditability.
    payload["metadata"].setdefault("conv_padding", "same")
    payload["metadata"].setdefault(
        "weight_init", "kaiming-normal conv/linear, xavier+orthogonal recurrent, zero bias"
    )
    torch.save(payload, str(path))


def load_model(path: str | Path) -> tuple[LrcnClassifier, dict]:
    payload = torch.load(str(path), weights_only=False)
    raw = dict(payload["config"])
    raw["conv_filters"] = tuple(raw["conv_filters"])
    raw["conv_kernels"] = tuple(raw["conv_kernels"])
    model = LrcnClassifier(ModelConfig(**raw))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("metadata", {})


def history_to_csv(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
        for row in history:
            writer.writerow([row.epoch, f"{row.train_loss:.6f}", f"{row.train_acc:.6f}", f"{row.val_acc:.6f}"])
