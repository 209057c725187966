"""Joint regression + pairwise ranking objective and the optimizer loop.

The per-day loss is sum_i (y_i - r_i)^2 plus eta times the pairwise hinge
sum_ij max(0, -(y_i - y_j)(r_i - r_j)); batches average this over days.
One optimizer step consumes one trading day's cross-section. Checkpoints
are a versioned binary container with a magic header, a model-config
fingerprint, and named float64 parameter tensors in a fixed order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .data import WindowBatch
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .evaluation import daily_pearson
from .model import DTYPE, ModelConfig, TrendModel

CKPT_MAGIC = b"GTCK"
CKPT_VERSION = 1


@dataclass
class LossConfig:
    """Objective and optimizer settings."""

    eta: float = 5.0
    mse_weight: float = 1.0
    learning_rate: float = 0.01
    max_epochs: int = 60
    seed: int = 0
    patience: int = 10
    optimizer: str = "adam"  # "adam" or "sgd"
    pair_sample: int | None = None  # None = exact O(N^2) ranking term

    def validate(self) -> None:
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


def pairwise_ranking_penalty(
    y: torch.Tensor,
    r: torch.Tensor,
    pair_sample: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Sum over ordered pairs of max(0, -(y_i - y_j)(r_i - r_j)).

    With pair_sample set, draws that many ordered pairs uniformly with
    replacement and rescales by N^2, an unbiased estimate of the full sum.
    """
    N = y.shape[-1]
    if pair_sample is None:
        dy = y.unsqueeze(-1) - y.unsqueeze(-2)
        dr = r.unsqueeze(-1) - r.unsqueeze(-2)
        return torch.clamp(-dy * dr, min=0.0).sum(dim=(-2, -1))
    i = torch.randint(N, (pair_sample,), generator=generator)
    j = torch.randint(N, (pair_sample,), generator=generator)
    hinge = torch.clamp(
        -(y[..., i] - y[..., j]) * (r[..., i] - r[..., j]), min=0.0
    )
    return float(N * N) * hinge.mean(dim=-1)


def composite_loss(
    y: torch.Tensor,
    r: torch.Tensor,
    eta: float,
    mse_weight: float = 1.0,
    pair_sample: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Day-level loss, averaged over any leading day axes."""
    y = torch.as_tensor(y, dtype=DTYPE)
    r = torch.as_tensor(r, dtype=DTYPE)
    if y.shape != r.shape:
        raise ConfigError(f"score shape {tuple(y.shape)} != label shape {tuple(r.shape)}")
    mse = ((y - r) ** 2).sum(dim=-1)
    rank = pairwise_ranking_penalty(y, r, pair_sample, generator)
    return (mse_weight * mse + eta * rank).mean()


def grad_check(
    model: TrendModel,
    X,
    r,
    eta: float = 5.0,
    epsilon: float = 1e-5,
) -> float:
    """Worst relative error between autograd and central finite differences.

    Intended for small fixtures; perturbs every parameter coordinate twice.
    """
    X = torch.as_tensor(np.asarray(X), dtype=DTYPE)
    r = torch.as_tensor(np.asarray(r), dtype=DTYPE)

    def f() -> torch.Tensor:
        return composite_loss(model(X), r, eta)

    model.zero_grad()
    loss = f()
    if not torch.isfinite(loss):
        raise TrainingDivergedError("non-finite loss in grad_check")
    loss.backward()

    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            grad = p.grad.reshape(-1)
            flat = p.data.reshape(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + epsilon
                up = f().item()
                flat[k] = orig - epsilon
                down = f().item()
                flat[k] = orig
                fd = (up - down) / (2.0 * epsilon)
                g = grad[k].item()
                rel = abs(fd - g) / max(abs(fd), abs(g), 1e-6)
                worst = max(worst, rel)
    return worst


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_ic: float


@dataclass
class Checkpoint:
    """Serializable training artifact: parameters plus provenance."""

    model_config: ModelConfig
    state: dict[str, np.ndarray]
    epoch: int
    val_ic: float
    loss_config: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.model_config)


def config_fingerprint(model_config: ModelConfig) -> str:
    blob = json.dumps(model_config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def validation_ic(model: TrendModel, batches: list[WindowBatch]) -> float:
    """Mean daily Pearson correlation of model scores vs realized returns."""
    ics = []
    with torch.no_grad():
        for b in batches:
            if b.X.shape[0] < 3:
                continue
            y = model(torch.as_tensor(b.X, dtype=DTYPE)).numpy()
            ic = daily_pearson(y, b.r)
            if np.isfinite(ic):
                ics.append(ic)
    return float(np.mean(ics)) if ics else float("nan")


def _snapshot(model: TrendModel) -> dict[str, np.ndarray]:
    return {
        name: p.detach().numpy().copy() for name, p in model.named_parameters()
    }


def restore_state(model: TrendModel, state: dict[str, np.ndarray]) -> None:
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name not in state:
                raise CheckpointError(f"checkpoint missing parameter {name}")
            arr = state[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(
                    f"parameter {name} shape {arr.shape} != model {tuple(p.shape)}"
                )
            p.copy_(torch.as_tensor(arr, dtype=DTYPE))


def fit(
    model: TrendModel,
    train: list[WindowBatch],
    valid: list[WindowBatch],
    config: LossConfig,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Day-batch gradient descent; keeps the best-validation-IC snapshot.

    Epoch order is a seeded permutation of training days, so the whole run
    is reproducible bit for bit. Stops early after `patience` epochs with
    no validation improvement.
    """
    config.validate()
    train = [b for b in train if b.X.shape[0] >= 2]
    if not train or not valid:
        raise ConfigError("fit needs non-empty train and valid splits")
    if config.optimizer == "adam":
        opt = torch.optim.Adam(
            model.parameters(), lr=config.learning_rate,
            betas=(0.9, 0.999), eps=1e-8,
        )
    else:
        opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed)
    pair_gen = torch.Generator().manual_seed(config.seed)

    history: list[EpochStats] = []
    best_state = _snapshot(model)
    best_ic = float("-inf")
    best_epoch = -1
    stale = 0
    step = 0
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(len(train))
        total = 0.0
        for k in order:
            b = train[k]
            opt.zero_grad()
            y = model(torch.as_tensor(b.X, dtype=DTYPE))
            loss = composite_loss(
                y, torch.as_tensor(b.r, dtype=DTYPE),
                config.eta, config.mse_weight,
                config.pair_sample, pair_gen,
            )
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step} (epoch {epoch}, day {b.t})"
                )
            loss.backward()
            opt.step()
            total += loss.item()
            step += 1
        val_ic = validation_ic(model, valid)
        history.append(EpochStats(epoch, total / len(train), val_ic))
        if np.isfinite(val_ic) and val_ic > best_ic:
            best_ic = val_ic
            best_epoch = epoch
            best_state = _snapshot(model)
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break

    restore_state(model, best_state)
    ckpt = Checkpoint(
        model_config=model.config,
        state=best_state,
        epoch=best_epoch,
        val_ic=best_ic if best_epoch >= 0 else float("nan"),
        loss_config=asdict(config),
    )
    return ckpt, history


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Binary layout: magic, version, JSON header length, header, raw tensors."""
    names = sorted(ckpt.state)
    header = {
        "fingerprint": ckpt.fingerprint,
        "model_config": ckpt.model_config.to_dict(),
        "epoch": ckpt.epoch,
        "val_ic": ckpt.val_ic,
        "loss_config": ckpt.loss_config,
        "params": [
            {"name": n, "shape": list(ckpt.state[n].shape)} for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.state[n], dtype=np.float64).tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CKPT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {version} unsupported (expected {CKPT_VERSION})"
        )
    hlen = struct.unpack("<I", raw[8:12])[0]
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    offset = 12 + hlen
    state: dict[str, np.ndarray] = {}
    for spec_entry in header["params"]:
        shape = tuple(spec_entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor data")
        state[spec_entry["name"]] = np.frombuffer(chunk, dtype=np.float64).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    cfg = ModelConfig(**header["model_config"])
    ckpt = Checkpoint(
        model_config=cfg,
        state=state,
        epoch=header["epoch"],
        val_ic=header["val_ic"],
        loss_config=header.get("loss_config", {}),
    )
    if header["fingerprint"] != ckpt.fingerprint:
        raise CheckpointError(f"{path}: fingerprint mismatch, file corrupt")
    return ckpt


def build_model(ckpt: Checkpoint) -> TrendModel:
    """Reconstruct the model a checkpoint was trained with."""
    model = TrendModel(ckpt.model_config)
    restore_state(model, ckpt.state)
    return model
