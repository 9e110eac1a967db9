"""Dense-block regression network: configuration, assembly, forward, backward.

Architecture, in order: 7x7/2 convolution (pad 3, no bias), 2x2/2 max pool,
alternating dense blocks and transitions (1x1 convolution to
floor(compression * channels) followed by 2x2 average pooling), global average
pooling, a hidden fully connected layer with ReLU, and a single linear output.
Each dense-block composite layer is [BN] -> ReLU -> 1x1 conv (4 * growth
channels) -> [BN] -> ReLU -> 3x3 conv (growth channels), its output
concatenated onto the running feature stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfigError, ShapeMismatchError, StaleTraceError
from .layers import (
    AvgPool2x2,
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool2x2,
    ReLU,
    RunCtx,
)

FREEZE_POLICIES = ("none", "last_block_and_head")


@dataclass(frozen=True)
class DenseNetConfig:
    input_dim: int = 1024
    init_channels: int = 64
    growth_rate: int = 32
    block_layers: tuple[int, ...] = (6, 12, 24, 16)
    compression: float = 0.5
    head_hidden: int = 64
    use_batchnorm: bool = True

    def validate(self) -> None:
        if self.input_dim < 1 or self.init_channels < 1 or self.growth_rate < 1:
            raise InvalidConfigError("dimensions and channel counts must be positive")
        if self.head_hidden < 1:
            raise InvalidConfigError("head_hidden must be positive")
        if not self.block_layers or any(l < 1 for l in self.block_layers):
            raise InvalidConfigError("block_layers must be a nonempty tuple of positives")
        if not 0.0 < self.compression <= 1.0:
            raise InvalidConfigError("compression must lie in (0, 1]")
        if feature_map_dim(self) < 1:
            raise InvalidConfigError(
                f"input_dim {self.input_dim} collapses below 1x1 before global pooling"
            )


def desk_config() -> DenseNetConfig:
    """Small preset that trains in minutes on a laptop CPU."""
    return DenseNetConfig(
        input_dim=64, init_channels=16, growth_rate=8, block_layers=(2, 2, 2),
        compression=0.5, head_hidden=64, use_batchnorm=True,
    )


def feature_vector_length(cfg: DenseNetConfig) -> int:
    """Channel count entering global average pooling."""
    c = cfg.init_channels
    for b, n_layers in enumerate(cfg.block_layers):
        c += n_layers * cfg.growth_rate
        if b < len(cfg.block_layers) - 1:
            c = int(np.floor(cfg.compression * c))
    return c

def feature_map_dim(cfg: DenseNetConfig) -> int:
    """Spatial side length entering global average pooling."""
    d = (cfg.input_dim - 1) // 2 + 1  # 7x7 stride-2 conv, pad 3
    d //= 2  # stem max pool
    for _ in range(len(cfg.block_layers) - 1):
        d //= 2  # transition average pool
    return d


@dataclass(eq=False)
class ModelParams:
    """Named float64 tensors plus the config that shaped them.

    ``version`` increments on every in-place optimizer update so stale forward
    traces can be detected.
    """

    cfg: DenseNetConfig
    tensors: dict[str, np.ndarray]
    rng_seed: int = 0
    version: int = 0

    def copy(self) -> "ModelParams":
        return ModelParams(
            cfg=self.cfg,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            rng_seed=self.rng_seed,
            version=self.version,
        )


@dataclass(eq=False)
class ForwardTrace:
    """Everything backward needs to replay a forward pass."""

    predictions: np.ndarray  # (N,)
    features: np.ndarray  # last dense block output (N, C, h, w)
    mode: str
    freeze_policy: str
    caches: dict
    params_id: int
    params_version: int


class _Composite:
    """One dense-block layer: [BN] ReLU conv1x1 [BN] ReLU conv3x3."""

    def __init__(self, prefix: str, c_in: int, growth: int, use_bn: bool):
        self.c_in = c_in
        inner = 4 * growth
        seq = []
        if use_bn:
            seq.append(BatchNorm2d(prefix + ".bn1", c_in))
        seq.append(ReLU(prefix + ".relu1"))
        seq.append(Conv2d(prefix + ".conv1", c_in, inner, 1))
        if use_bn:
            seq.append(BatchNorm2d(prefix + ".bn2", inner))
        seq.append(ReLU(prefix + ".relu2"))
        seq.append(Conv2d(prefix + ".conv2", inner, growth, 3, pad=1))
        self.seq = seq

    def forward(self, x, ctx):
        for layer in self.seq:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dy, ctx, grads):
        for layer in reversed(self.seq):
            dy = layer.backward(dy, ctx, grads)
        return dy


class _DenseBlock:
    def __init__(self, name: str, c_in: int, n_layers: int, growth: int, use_bn: bool):
        self.name = name
        self.layers = [
            _Composite(f"{name}.layer{l}", c_in + l * growth, growth, use_bn)
            for l in range(n_layers)
        ]

    def forward(self, x, ctx):
        feats = x
        for comp in self.layers:
            new = comp.forward(feats, ctx)
            feats = np.concatenate([feats, new], axis=1)
        return feats

    def backward(self, dy, ctx, grads):
        d = dy
        for comp in reversed(self.layers):
            d_prev = d[:, : comp.c_in]
            d_new = d[:, comp.c_in :]
            d = d_prev + comp.backward(d_new, ctx, grads)
        return d


class _Transition:
    """1x1 convolution to the compressed channel count, then 2x2 average pool."""

    def __init__(self, name: str, c_in: int, c_out: int):
        self.conv = Conv2d(name + ".conv", c_in, c_out, 1)
        self.pool = AvgPool2x2(name + ".pool")

    def forward(self, x, ctx):
        return self.pool.forward(self.conv.forward(x, ctx), ctx)

    def backward(self, dy, ctx, grads):
        return self.conv.backward(self.pool.backward(dy, ctx, grads), ctx, grads)


class _Net:
    def __init__(self, cfg: DenseNetConfig):
        entries = [
            Conv2d("stem.conv", 1, cfg.init_channels, 7, stride=2, pad=3),
            MaxPool2x2("stem.pool"),
        ]
        c = cfg.init_channels
        n_blocks = len(cfg.block_layers)
        for b, n_layers in enumerate(cfg.block_layers):
            entries.append(_DenseBlock(f"block{b}", c, n_layers, cfg.growth_rate, cfg.use_batchnorm))
            if b == n_blocks - 1:
                self.last_block_index = len(entries) - 1
            c += n_layers * cfg.growth_rate
            if b < n_blocks - 1:
                c_out = int(np.floor(cfg.compression * c))
                entries.append(_Transition(f"trans{b}", c, c_out))
                c = c_out
        self.gap_index = len(entries)
        entries.extend(
            [
                GlobalAvgPool("gap"),
                Linear("head.fc1", c, cfg.head_hidden),
                ReLU("head.relu"),
                Linear("head.fc2", cfg.head_hidden, 1),
            ]
        )
        self.entries = entries

    def param_layers(self):
        for entry in self.entries:
            if isinstance(entry, _DenseBlock):
                for comp in entry.layers:
                    yield from comp.seq
            elif isinstance(entry, _Transition):
                yield entry.conv
            else:
                yield entry

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for layer in self.param_layers():
            shapes.extend(layer.param_shapes())
        return shapes

    def backward_walk(self, dy, ctx, grads, stop_at: int):
        for i in range(len(self.entries) - 1, stop_at - 1, -1):
            dy = self.entries[i].backward(dy, ctx, grads)
        return dy


def build_net(cfg: DenseNetConfig) -> _Net:
    cfg.validate()
    return _Net(cfg)


def init_model(cfg: DenseNetConfig, seed: int) -> ModelParams:
    """He-initialized parameters; draw order is the parameter listing order,
    so a given (cfg, seed) is fully reproducible."""
    net = build_net(cfg)
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for layer in net.param_layers():
        layer.init_params(rng, tensors)
    return ModelParams(cfg=cfg, tensors=tensors, rng_seed=seed)


def _frozen_predicate(cfg: DenseNetConfig, freeze_policy: str):
    if freeze_policy == "none":
        return lambda name: False
    if freeze_policy == "last_block_and_head":
        last = f"block{len(cfg.block_layers) - 1}."
        return lambda name: not (name.startswith(last) or name.startswith("head."))
    raise InvalidConfigError(f"unknown freeze policy {freeze_policy!r}")


def _stack_batch(batch, input_dim: int) -> np.ndarray:
    arrs = [np.asarray(a, dtype=np.float64) for a in batch]
    if not arrs:
        raise ValueError("empty batch")
    for a in arrs:
        if a.shape != (input_dim, input_dim):
            raise ShapeMismatchError(
                f"input is {a.shape}, config wants ({input_dim}, {input_dim})"
            )
    return np.stack(arrs)[:, None, :, :]


def forward(params: ModelParams, batch, mode: str = "eval", freeze_policy: str = "none") -> ForwardTrace:
    """Run the network on a batch of square images.

    ``batch`` is a sequence of (input_dim, input_dim) arrays. Train mode uses
    batch statistics in unfrozen BN layers and updates their running moments
    in place; eval mode reads running moments and mutates nothing.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    net = build_net(params.cfg)
    x = _stack_batch(batch, params.cfg.input_dim)
    ctx = RunCtx(tensors=params.tensors, mode=mode, frozen=_frozen_predicate(params.cfg, freeze_policy))
    features = None
    h = x
    for i, entry in enumerate(net.entries):
        h = entry.forward(h, ctx)
        if i == net.last_block_index:
            features = h
    return ForwardTrace(
        predictions=h[:, 0],
        features=features,
        mode=mode,
        freeze_policy=freeze_policy,
        caches=ctx.caches,
        params_id=id(params),
        params_version=params.version,
    )


def _check_trace(params: ModelParams, trace: ForwardTrace) -> None:
    if trace.params_id != id(params) or trace.params_version != params.version:
        raise StaleTraceError("trace was produced by different (or since-updated) parameters")


def loss_mae(predictions: np.ndarray, targets) -> float:
    """Mean absolute error."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: predictions {p.shape} vs targets {t.shape}")
    if p.size == 0:
        raise ValueError("empty prediction vector")
    return float(np.mean(np.abs(p - t)))


def _loss_grad(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # subgradient of mean |p - t|; 0 where p == t
    return np.sign(predictions - targets) / predictions.size


def backward(params: ModelParams, trace: ForwardTrace, targets) -> dict[str, np.ndarray]:
    """Gradients of the MAE objective for every unfrozen parameter.

    The trace must come from a train-mode forward on these exact params
    (no optimizer step in between), otherwise StaleTraceError.
    """
    _check_trace(params, trace)
    if trace.mode != "train":
        raise StaleTraceError("backward needs a train-mode trace")
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != trace.predictions.shape:
        raise ValueError(f"targets {t.shape} do not match predictions {trace.predictions.shape}")
    net = build_net(params.cfg)
    ctx = RunCtx(
        tensors=params.tensors,
        mode=trace.mode,
        frozen=_frozen_predicate(params.cfg, trace.freeze_policy),
        caches=trace.caches,
    )
    dy = _loss_grad(trace.predictions, t)[:, None]
    grads: dict[str, np.ndarray] = {}
    stop = net.last_block_index if trace.freeze_policy == "last_block_and_head" else 0
    net.backward_walk(dy, ctx, grads, stop_at=stop)
    return grads


def prediction_feature_gradient(params: ModelParams, trace: ForwardTrace) -> np.ndarray:
    """d(sum of raw predictions) / d(last dense block output).

    Samples are independent above the last block in eval mode, so each slice
    [i] is the gradient of prediction i alone. Shape matches trace.features.
    """
    _check_trace(params, trace)
    net = build_net(params.cfg)
    ctx = RunCtx(
        tensors=params.tensors,
        mode=trace.mode,
        frozen=_frozen_predicate(params.cfg, trace.freeze_policy),
        caches=trace.caches,
    )
    dy = np.ones((trace.predictions.shape[0], 1))
    return net.backward_walk(dy, ctx, {}, stop_at=net.gap_index)


def gradient_check(
    params: ModelParams,
    batch,
    targets,
    step: float = 1e-5,
    freeze_policy: str = "none",
    max_entries_per_tensor: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Works on a private copy of the parameters. Checks every unfrozen tensor;
    if ``max_entries_per_tensor`` is set, a seeded sample of entries per
    tensor, else every entry. Relative error is |a - f| / max(1e-6, |a|, |f|).
    """
    work = params.copy()
    t = np.asarray(targets, dtype=np.float64)
    trace = forward(work, batch, "train", freeze_policy)
    grads = backward(work, trace, t)
    pick_rng = np.random.default_rng(seed)
    worst = 0.0
    for name, g in sorted(grads.items()):
        tensor = work.tensors[name]
        flat_g = np.asarray(g).ravel()
        n = tensor.size
        if max_entries_per_tensor is not None and n > max_entries_per_tensor:
            idx = pick_rng.choice(n, size=max_entries_per_tensor, replace=False)
        else:
            idx = np.arange(n)
        flat_t = tensor.ravel()
        for j in idx:
            orig = flat_t[j]
            flat_t[j] = orig + step
            lo_plus = loss_mae(forward(work, batch, "train", freeze_policy).predictions, t)
            flat_t[j] = orig - step
            lo_minus = loss_mae(forward(work, batch, "train", freeze_policy).predictions, t)
            flat_t[j] = orig
            fd = (lo_plus - lo_minus) / (2.0 * step)
            rel = abs(flat_g[j] - fd) / max(1e-6, abs(flat_g[j]), abs(fd))
            worst = max(worst, rel)
    return worst
