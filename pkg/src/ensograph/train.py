"""Deterministic minibatch training: MAE objective, Adam, gradient clipping.

Everything runs in float32 on one thread of numpy, shuffling with a seeded
PCG64 generator, so a (config, seed, data) triple reproduces the same
parameters bit for bit. Inputs are scaled by one global standard deviation
measured on the training inputs; that scale travels with the checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adiff
from .adiff import Tensor
from .errors import NumericalError
from .samples import SampleSet
from .stgnn import ModelConfig, ModelParams, forward, init_params


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True
    loss: str = "mae"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("betas must lie in (0, 1)")
        if self.loss not in ("mae", "mse"):
            raise ValueError(f"loss must be 'mae' or 'mse', got {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class TrainResult:
    params: ModelParams
    history: TrainHistory
    input_scale: float


def mae_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over every element."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return adiff.reduce_mean(adiff.abs_(adiff.sub(pred, target)))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = adiff.sub(pred, target)
    return adiff.reduce_mean(adiff.mul(diff, diff))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @staticmethod
    def zeros_like(params: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, t: int, config: TrainConfig):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if t < 1:
        raise ValueError("step count t starts at 1")
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r}")
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        update = config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        new_p[name] = p - update
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(new_m, new_v)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients together so their global L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm <= max_norm:
        return dict(grads)
    scale = np.float32(max_norm / norm)
    return {k: g * scale for k, g in grads.items()}


def _batch_tensors(inputs: np.ndarray, targets: np.ndarray, idx: np.ndarray):
    # [S, w, N] -> [B, 1, N, w]
    xb = inputs[idx].transpose(0, 2, 1)[:, None, :, :]
    return Tensor(np.ascontiguousarray(xb)), Tensor(np.ascontiguousarray(targets[idx]))


def _eval_loss(params, config, tconfig, inputs, targets, chunk=256) -> float:
    lossfn = mae_loss if tconfig.loss == "mae" else mse_loss
    total, count = 0.0, 0
    for lo in range(0, inputs.shape[0], chunk):
        idx = np.arange(lo, min(lo + chunk, inputs.shape[0]))
        xb, yb = _batch_tensors(inputs, targets, idx)
        loss = lossfn(forward(params, config, xb), yb)
        total += loss.item() * idx.size
        count += idx.size
    return total / count


def train(config: ModelConfig, tconfig: TrainConfig, samples: SampleSet,
          log=None) -> TrainResult:
    """Fit the model on the sample set; deterministic for fixed seeds.

    The newest val_fraction of samples is held out for loss reporting only.
    Raises NumericalError as soon as a loss or gradient goes non-finite.
    """
    if samples.window != config.window:
        raise ValueError(f"sample window {samples.window} != config window {config.window}")
    if samples.horizon != config.horizon:
        raise ValueError(f"sample horizon {samples.horizon} != config horizon {config.horizon}")
    if samples.inputs.shape[2] != config.n_nodes:
        raise ValueError(f"samples carry {samples.inputs.shape[2]} nodes, config expects {config.n_nodes}")
    n_total = len(samples)
    if n_total < 1:
        raise ValueError("no samples to train on")

    n_val = int(n_total * tconfig.val_fraction)
    n_train = n_total - n_val
    if n_train < 1:
        raise ValueError("validation split leaves no training samples")

    scale = float(np.std(samples.inputs[:n_train].astype(np.float64)))
    if not np.isfinite(scale) or scale == 0.0:
        scale = 1.0
    inputs = (samples.inputs / np.float32(scale)).astype(np.float32)
    targets = samples.node_targets.astype(np.float32)

    params = init_params(config, seed=config.seed)
    flat = {name: t.data for name, t in params.items()}
    state = AdamState.zeros_like(flat)
    rng = np.random.default_rng(tconfig.seed)
    lossfn = mae_loss if tconfig.loss == "mae" else mse_loss
    history = TrainHistory()
    started = time.perf_counter()
    step = 0

    for epoch in range(tconfig.epochs):
        order = rng.permutation(n_train) if tconfig.shuffle else np.arange(n_train)
        epoch_sum, epoch_count = 0.0, 0
        for lo in range(0, n_train, tconfig.batch_size):
            idx = order[lo: lo + tconfig.batch_size]
            xb, yb = _batch_tensors(inputs, targets, idx)
            params.zero_grad()
            loss = lossfn(forward(params, config, xb), yb)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch} step {step}")
            adiff.backward(loss)
            grads = clip_gradients({n: t.grad for n, t in params.items()}, tconfig.clip_norm)
            step += 1
            flat, state = adam_step({n: t.data for n, t in params.items()},
                                    grads, state, step, tconfig)
            for name, t in params.items():
                t.data = flat[name]
            epoch_sum += value * idx.size
            epoch_count += idx.size
        history.train_loss.append(epoch_sum / epoch_count)
        if n_val:
            history.val_loss.append(
                _eval_loss(params, config, tconfig, inputs[n_train:], targets[n_train:])
            )
        if log is not None:
            val = f" val={history.val_loss[-1]:.5f}" if n_val else ""
            log(f"epoch {epoch + 1}/{tconfig.epochs} loss={history.train_loss[-1]:.5f}{val}")

    history.seconds = time.perf_counter() - started
    return TrainResult(params=params, history=history, input_scale=scale)


# ----------------------------------------------------------------- manifest

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _build_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    from . import __version__
    return f"v{__version__}"


def write_manifest(path, config: ModelConfig, tconfig: TrainConfig, data_paths,
                   extra: dict | None = None):
    """Record everything needed to reproduce a run next to its checkpoint."""
    manifest = {
        "model_config": config.to_dict(),
        "train_config": {
            "lr": tconfig.lr, "epochs": tconfig.epochs, "batch_size": tconfig.batch_size,
            "seed": tconfig.seed, "clip_norm": tconfig.clip_norm,
            "beta1": tconfig.beta1, "beta2": tconfig.beta2, "eps": tconfig.eps,
            "shuffle": tconfig.shuffle, "loss": tconfig.loss,
            "val_fraction": tconfig.val_fraction,
        },
        "data_files": {Path(p).name: _sha256(Path(p)) for p in data_paths},
        "build": _build_describe(),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
