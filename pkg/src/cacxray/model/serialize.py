"""Weights file format and the JSON sidecar.

Binary layout (all little endian): magic ``CACW``, version u16, tensor count
u32, then per tensor: name length u16, UTF-8 name, rank u8, one u32 per
dimension, float32 payload row-major. Tensors are written in the network's
canonical parameter order; load normalizes to that order, so
save(load(save(p))) == save(p) bitwise.

The sidecar JSON stores the network configuration and the label transform so
a weights file is self-describing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import BadMagicError, ShapeMismatchError, TruncatedFileError
from ..labels import LabelTransform
from .network import DenseNetConfig, ModelParams, build_net

WEIGHTS_MAGIC = b"CACW"
WEIGHTS_VERSION = 1


def weights_to_bytes(params: ModelParams) -> bytes:
    chunks = [WEIGHTS_MAGIC, struct.pack("<HI", WEIGHTS_VERSION, len(params.tensors))]
    for name, arr in params.tensors.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def weights_from_bytes(data: bytes, cfg: DenseNetConfig) -> ModelParams:
    """Decode and validate against the shapes ``cfg`` implies.

    Raises BadMagicError, TruncatedFileError (short file or trailing bytes),
    or ShapeMismatchError when the tensor set disagrees with the config.
    Returns float64 parameters whose values are float32-representable.
    """
    if len(data) < 4 or data[:4] != WEIGHTS_MAGIC:
        raise BadMagicError("not a weights file")
    pos = 4

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(f"file ends inside {what}")
        out = data[pos : pos + n]
        pos += n
        return out

    version, count = struct.unpack("<HI", take(6, "the header"))
    if version != WEIGHTS_VERSION:
        raise BadMagicError(f"unsupported weights version {version}")
    loaded: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "a tensor name length"))
        name = take(name_len, "a tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name}"))
        if rank > 8:
            raise TruncatedFileError(f"implausible rank {rank} for {name}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * size, f"data of {name}")
        loaded[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if pos != len(data):
        raise TruncatedFileError(f"{len(data) - pos} trailing bytes after the last tensor")

    expected = build_net(cfg).param_shapes()
    expected_map = dict(expected)
    missing = [n for n, _ in expected if n not in loaded]
    extra = [n for n in loaded if n not in expected_map]
    if missing or extra:
        raise ShapeMismatchError(
            f"tensor set does not match the config (missing {missing[:3]}, unexpected {extra[:3]})"
        )
    for name, shape in expected:
        if loaded[name].shape != shape:
            raise ShapeMismatchError(f"{name}: file has {loaded[name].shape}, config wants {shape}")
    # canonical order regardless of file order
    tensors = {name: loaded[name] for name, _ in expected}
    return ModelParams(cfg=cfg, tensors=tensors, rng_seed=0)


def save_weights(path, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(params))


def load_weights(path, cfg: DenseNetConfig) -> ModelParams:
    with open(path, "rb") as fh:
        return weights_from_bytes(fh.read(), cfg)


def sidecar_to_json(cfg: DenseNetConfig, lt: LabelTransform) -> str:
    return json.dumps(
        {
            "net": {
                "input_dim": cfg.input_dim,
                "init_channels": cfg.init_channels,
                "growth_rate": cfg.growth_rate,
                "block_layers": list(cfg.block_layers),
                "compression": cfg.compression,
                "head_hidden": cfg.head_hidden,
                "use_batchnorm": cfg.use_batchnorm,
            },
            "label_transform": {
                "mu_log": lt.mu_log,
                "sigma_log": lt.sigma_log,
                "clip_max": lt.clip_max,
                "epsilon": lt.epsilon,
            },
        },
        sort_keys=True,
        indent=2,
    )


def sidecar_from_json(text: str) -> tuple[DenseNetConfig, LabelTransform]:
    obj = json.loads(text)
    net = obj["net"]
    lt = obj["label_transform"]
    cfg = DenseNetConfig(
        input_dim=int(net["input_dim"]),
        init_channels=int(net["init_channels"]),
        growth_rate=int(net["growth_rate"]),
        block_layers=tuple(int(x) for x in net["block_layers"]),
        compression=float(net["compression"]),
        head_hidden=int(net["head_hidden"]),
        use_batchnorm=bool(net["use_batchnorm"]),
    )
    transform = LabelTransform(
        mu_log=float(lt["mu_log"]),
        sigma_log=float(lt["sigma_log"]),
        clip_max=float(lt["clip_max"]),
        epsilon=float(lt["epsilon"]),
    )
    return cfg, transform
