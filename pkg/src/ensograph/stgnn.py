"""Spatiotemporal graph network forecasting node anomalies at several leads.

Architecture, per forward pass: a 1x1 channel projection lifts the input
window [B, 1, N, w] to the residual width, then each layer applies a gated
dilated temporal convolution (tanh filter x sigmoid gate, valid-only, so
time shrinks and no padding leaks), a mix-hop graph convolution over the
adjacency learned from node embeddings (run along both edge directions and
summed), a residual add, and a full-width skip projection. The relu'd skip
sum feeds two 1x1 stages that emit one channel per lead: [B, H, N].

Temporal receptive field is 1 + sum(dilation_l * (K - 1)); configs whose
receptive field exceeds the input window are rejected outright.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adiff
from .adiff import Tensor
from .errors import NumericalError, ValidationError
from .graph import GraphLearnConfig, learn_adjacency, normalize, topk_sparsify
from .grid import GridSpec

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    horizon: int
    window: int = 3
    layers: int = 2
    residual_channels: int = 16
    conv_channels: int = 16
    skip_channels: int = 32
    end_channels: int = 64
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 1)
    mixhop_depth: int = 2
    beta: float = 0.05
    graph: GraphLearnConfig = field(default_factory=GraphLearnConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if isinstance(self.graph, dict):
            object.__setattr__(self, "graph", GraphLearnConfig(**self.graph))
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if len(self.dilations) != self.layers:
            raise ValueError(
                f"need one dilation per layer: {self.layers} layers, {len(self.dilations)} dilations"
            )
        if any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be >= 1")
        for name in ("residual_channels", "conv_channels", "skip_channels",
                     "end_channels", "kernel_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.mixhop_depth < 0:
            raise ValueError("mixhop_depth must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        rf = self.receptive_field
        if rf > self.window:
            raise ValueError(
                f"receptive field {rf} exceeds window {self.window} "
                f"(kernel {self.kernel_size}, dilations {self.dilations})"
            )
        if self.graph.topk > self.n_nodes:
            raise ValueError(f"topk {self.graph.topk} exceeds n_nodes {self.n_nodes}")

    @property
    def receptive_field(self) -> int:
        return 1 + sum(d * (self.kernel_size - 1) for d in self.dilations)

    def time_lengths(self) -> list[int]:
        """Time-axis length entering each layer and leaving the last."""
        out = [self.window]
        for d in self.dilations:
            out.append(out[-1] - d * (self.kernel_size - 1))
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["graph"] = GraphLearnConfig(**d["graph"])
        d["dilations"] = tuple(d["dilations"])
        return ModelConfig(**d)


class ModelParams:
    """Named parameter tensors in a fixed order."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def n_values(self) -> int:
        return sum(t.data.size for t in self._tensors.values())


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, fan_in) for every tensor, in initialization order."""
    cr, cc = config.residual_channels, config.conv_channels
    cs, ce = config.skip_channels, config.end_channels
    K, D = config.kernel_size, config.mixhop_depth
    lengths = config.time_lengths()
    shapes: list[tuple[str, tuple[int, ...], int]] = [
        ("e1", (config.n_nodes, config.graph.embed_dim), 0),
        ("e2", (config.n_nodes, config.graph.embed_dim), 0),
        ("start_w", (cr, 1, 1, 1), 1),
        ("start_b", (cr,), 1),
    ]
    for l in range(config.layers):
        shapes += [
            (f"l{l}_filter_w", (cc, cr, 1, K), cr * K),
            (f"l{l}_filter_b", (cc,), cr * K),
            (f"l{l}_gate_w", (cc, cr, 1, K), cr * K),
            (f"l{l}_gate_b", (cc,), cr * K),
        ]
        for direction in ("fwd", "bwd"):
            for j in range(D + 1):
                shapes.append((f"l{l}_mix_{direction}_w{j}", (cr, cc, 1, 1), cc))
            shapes.append((f"l{l}_mix_{direction}_b", (cr,), cc))
        t_out = lengths[l + 1]
        shapes += [
            (f"l{l}_skip_w", (cs, cr, 1, t_out), cr * t_out),
            (f"l{l}_skip_b", (cs,), cr * t_out),
        ]
    shapes += [
        ("end1_w", (ce, cs, 1, 1), cs),
        ("end1_b", (ce,), cs),
        ("end2_w", (config.horizon, ce, 1, 1), ce),
        ("end2_b", (config.horizon,), ce),
    ]
    return shapes


def init_params(config: ModelConfig, seed: int | None = None, dtype=np.float32) -> ModelParams:
    """Fresh parameters, fully determined by the seed.

    Embeddings are standard normal scaled by 0.1; every other tensor is
    uniform on [-b, b] with b = sqrt(1 / fan_in).
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tensors = {}
    for name, shape, fan_in in param_shapes(config):
        if name in ("e1", "e2"):
            data = rng.standard_normal(shape) * 0.1
        else:
            bound = float(np.sqrt(1.0 / fan_in))
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True)
    return ModelParams(tensors)


def _bias(b: Tensor, channels: int) -> Tensor:
    return adiff.reshape(b, (1, channels, 1, 1))


def _conv(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    out = adiff.dilated_conv1d(x, w, dilation)
    return adiff.add(out, _bias(b, w.shape[0]))


def temporal_block(x, filter_w, filter_b, gate_w, gate_b, dilation: int) -> Tensor:
    """Gated temporal convolution: tanh(filter) * sigmoid(gate)."""
    filt = adiff.tanh(_conv(x, filter_w, filter_b, dilation))
    gate = adiff.sigmoid(_conv(x, gate_w, gate_b, dilation))
    return adiff.mul(filt, gate)


def _node_mix(a: Tensor, h: Tensor) -> Tensor:
    """out[b,c,i,t] = sum_j a[i,j] h[b,c,j,t]."""
    ht = adiff.transpose(h, (0, 1, 3, 2))
    mixed = adiff.matmul(ht, adiff.transpose(a, (1, 0)))
    return adiff.transpose(mixed, (0, 1, 3, 2))


def _check_row_stochastic(a: Tensor):
    sums = a.data.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > 1e-4:
        raise ValueError(f"adjacency is not row-stochastic (row sum off by {worst:.2e})")


def _mixprop(h: Tensor, a_norm: Tensor, beta: float, ws: list[Tensor], b: Tensor) -> Tensor:
    _check_row_stochastic(a_norm)
    out = adiff.dilated_conv1d(h, ws[0], 1)
    state = h
    for j in range(1, len(ws)):
        state = adiff.add(adiff.mul(h, beta), adiff.mul(_node_mix(a_norm, state), 1.0 - beta))
        out = adiff.add(out, adiff.dilated_conv1d(state, ws[j], 1))
    return adiff.add(out, _bias(b, ws[0].shape[0]))


def mixhop_conv(h, a_fwd, a_bwd, beta, w_fwd, b_fwd, w_bwd, b_bwd) -> Tensor:
    """Mix-hop propagation along both edge directions, summed.

    Hop j keeps beta of the layer input and propagates the rest:
    h0 = h, hj = beta*h + (1-beta)*(A @ hj-1); output sums hj @ Wj.
    Both adjacencies must be row-stochastic.
    """
    fwd = _mixprop(h, a_fwd, beta, w_fwd, b_fwd)
    bwd = _mixprop(h, a_bwd, beta, w_bwd, b_bwd)
    return adiff.add(fwd, bwd)


def _check_finite(t: Tensor, layer: int, stage: str):
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"non-finite activation at layer {layer} ({stage})")


def forward(params: ModelParams, config: ModelConfig, x: Tensor) -> Tensor:
    """Full model: [B, 1, N, w] -> per-lead node predictions [B, H, N]."""
    x = adiff.as_tensor(x)
    expect = (1, config.n_nodes, config.window)
    if x.ndim != 4 or x.shape[1:] != expect:
        raise ValueError(f"input shape {x.shape} does not match [B, 1, {config.n_nodes}, {config.window}]")
    if not np.all(np.isfinite(x.data)):
        raise NumericalError("non-finite model input")

    a_raw = learn_adjacency(params["e1"], params["e2"], config.graph.alpha)
    a_sparse = topk_sparsify(a_raw, config.graph.topk)
    a_fwd = normalize(a_sparse)
    a_bwd = normalize(adiff.transpose(a_sparse, (1, 0)))

    h = _conv(x, params["start_w"], params["start_b"])
    skip = None
    for l in range(config.layers):
        t = temporal_block(
            h,
            params[f"l{l}_filter_w"], params[f"l{l}_filter_b"],
            params[f"l{l}_gate_w"], params[f"l{l}_gate_b"],
            config.dilations[l],
        )
        _check_finite(t, l, "temporal")
        g = mixhop_conv(
            t, a_fwd, a_bwd, config.beta,
            [params[f"l{l}_mix_fwd_w{j}"] for j in range(config.mixhop_depth + 1)],
            params[f"l{l}_mix_fwd_b"],
            [params[f"l{l}_mix_bwd_w{j}"] for j in range(config.mixhop_depth + 1)],
            params[f"l{l}_mix_bwd_b"],
        )
        h = adiff.add(g, adiff.tail(h, t.shape[-1]))
        _check_finite(h, l, "residual")
        s = _conv(h, params[f"l{l}_skip_w"], params[f"l{l}_skip_b"])
        skip = s if skip is None else adiff.add(skip, s)

    out = adiff.relu(skip)
    out = adiff.relu(_conv(out, params["end1_w"], params["end1_b"]))
    out = _conv(out, params["end2_w"], params["end2_b"])  # [B, H, N, 1]
    return adiff.reshape(out, out.shape[:3])


def predicted_index(node_preds: np.ndarray, observed_tail, weights: np.ndarray, k: int) -> np.ndarray:
    """Smoothed index forecasts from per-lead node predictions.

    node_preds is [H, N]; observed_tail holds the area-mean observations at
    leads <= 0, newest last (so tail[-1] is lead 0). Lead-l area means for
    l >= 1 come from the predictions. Returns the centered k-month mean
    labeled at each feasible lead, starting at lead 1.
    """
    node_preds = np.asarray(node_preds, dtype=np.float64)
    observed_tail = np.atleast_1d(np.asarray(observed_tail, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if node_preds.ndim != 2 or node_preds.shape[1] != weights.size:
        raise ValueError(f"node_preds {node_preds.shape} does not match {weights.size} weights")
    H = node_preds.shape[0]
    half = k // 2
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd and >= 1, got {k}")
    if observed_tail.size < half:
        raise ValueError(f"need {half} trailing observations for k={k}, got {observed_tail.size}")
    pred_means = node_preds @ weights / weights.sum()  # lead 1..H
    n_max = H - (k - 1 - half)
    if n_max < 1:
        raise ValueError(f"horizon {H} too short for k={k} smoothing")
    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        window = []
        for l in range(n - half, n + k - half):
            window.append(pred_means[l - 1] if l >= 1 else observed_tail[l - 1])
        out[n - 1] = np.mean(window)
    return out


def predict_oni(node_preds, last_observed: float, weights, k: int = 3) -> np.ndarray:
    """ONI forecasts for leads 1..H-1 from one sample's node predictions.

    The 3-month windows use the observed area mean as lead 0, so each
    forecast mixes one observation in at lead 1 and is fully model-driven
    from lead 3 on.
    """
    if k != 3:
        raise ValueError("predict_oni is defined for k=3")
    node_preds = np.asarray(node_preds)
    if node_preds.ndim != 2 or node_preds.shape[0] < 2:
        raise ValueError("node_preds must be [H, N] with H >= 2")
    return predicted_index(node_preds, [float(last_observed)], weights, k)


# ------------------------------------------------------------- persistence

@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    input_scale: float
    seed: int
    base_period: tuple[int, int] | None
    grid: "GridSpec | None"
    nodes: "list[tuple[int, int]] | None"


def save_checkpoint(path, params: ModelParams, config: ModelConfig, input_scale: float,
                    seed: int, base_period=None, grid=None, nodes=None):
    """One file: compact JSON header line, then raw little-endian float32 tensors.

    grid and nodes record which cells the model's node axis refers to, so
    evaluation and edge export can rebuild the region without the data.
    """
    records = []
    blobs = []
    for name, t in params.items():
        arr = np.ascontiguousarray(t.data.astype("<f4"))
        records.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "input_scale": float(input_scale),
        "seed": int(seed),
        "base_period": list(base_period) if base_period is not None else None,
        "grid": {"lats": list(grid.lats), "lons": list(grid.lons)} if grid is not None else None,
        "nodes": [[int(i), int(j)] for i, j in nodes] if nodes is not None else None,
        "tensors": records,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    Path(path).write_bytes(payload + b"".join(blobs))


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint, rejecting headers that disagree with their config."""
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    if cut < 0:
        raise ValidationError(f"checkpoint {path} has no header line")
    try:
        header = json.loads(raw[:cut].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed checkpoint header: {exc}") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {header.get('format_version')}")
    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad checkpoint config: {exc}") from exc

    expected = {name: shape for name, shape, _ in param_shapes(config)}
    records = header.get("tensors", [])
    got = {r["name"]: tuple(r["shape"]) for r in records}
    if got != expected:
        raise ValidationError("checkpoint tensors do not match the stored config")

    body = raw[cut + 1:]
    need = sum(int(np.prod(r["shape"])) for r in records) * 4
    if len(body) != need:
        raise ValidationError(f"checkpoint payload is {len(body)} bytes, expected {need}")
    tensors = {}
    offset = 0
    for r in records:
        count = int(np.prod(r["shape"]))
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(r["shape"])
        tensors[r["name"]] = Tensor(arr.copy(), requires_grad=True)
        offset += count * 4
    bp = header.get("base_period")
    gd = header.get("grid")
    nd = header.get("nodes")
    return Checkpoint(
        params=ModelParams(tensors),
        config=config,
        input_scale=float(header["input_scale"]),
        seed=int(header["seed"]),
        base_period=tuple(bp) if bp else None,
        grid=GridSpec(tuple(gd["lats"]), tuple(gd["lons"])) if gd else None,
        nodes=[(int(i), int(j)) for i, j in nd] if nd else None,
    )
