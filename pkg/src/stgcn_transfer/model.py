"""ST-GCN blocks, the shared feature extractor and the two task heads.

Parameters are plain ``dict[str, ndarray]`` partitions so the training code
can put exactly one partition on a tape and leave the others constant.
Forward functions accept arrays or :class:`~stgcn_transfer.autodiff.Tensor`
values interchangeably.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

CHECKPOINT_FORMAT = "stgcn-transfer-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_nodes: int = 22
    in_channels: int = 1
    extractor_channels: tuple[int, ...] = (16, 32, 64)
    head_channels: int = 64
    embed_dim: int = 64
    num_classes: int = 2
    temporal_kernel: int = 9
    source_kind: str = "contrastive"

    def __post_init__(self):
        object.__setattr__(self, "extractor_channels", tuple(int(c) for c in self.extractor_channels))
        if len(self.extractor_channels) != 3:
            raise ValueError("the feature extractor has exactly three blocks")
        if self.source_kind not in ("contrastive", "supervised"):
            raise ValueError(f"unknown source_kind {self.source_kind!r}")
        if min(self.num_nodes, self.in_channels, self.head_channels, self.embed_dim, self.temporal_kernel) < 1:
            raise ValueError("model sizes must be positive")

    @property
    def feature_channels(self) -> int:
        return self.extractor_channels[-1]

    @property
    def source_out(self) -> int:
        return self.embed_dim if self.source_kind == "contrastive" else self.num_classes


@dataclass
class ModelParameters:
    """Disjoint parameter partitions: extractor, target head, source head."""

    phi: dict[str, np.ndarray]
    theta_t: dict[str, np.ndarray]
    theta_s: dict[str, np.ndarray] = field(default_factory=dict)

    def partitions(self) -> dict[str, dict[str, np.ndarray]]:
        return {"phi": self.phi, "theta_t": self.theta_t, "theta_s": self.theta_s}

    def copy(self) -> "ModelParameters":
        return ModelParameters(*(
            {k: v.copy() for k, v in part.items()} for part in (self.phi, self.theta_t, self.theta_s)
        ))

    def count(self) -> int:
        return sum(v.size for part in self.partitions().values() for v in part.values())


def partition_hash(part: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(part):
        h.update(name.encode())
        h.update(np.ascontiguousarray(part[name], dtype=np.float64).tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ init


def init_block(rng: np.random.Generator, c_in: int, c_out: int, kernel: int, num_nodes: int, prefix: str) -> dict:
    return {
        f"{prefix}.W": rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in, c_out)),
        f"{prefix}.T": rng.normal(0.0, np.sqrt(2.0 / (kernel * c_out)), size=(kernel, c_out, c_out)),
        f"{prefix}.E": np.ones((num_nodes, num_nodes)),
    }


def init_extractor(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    c_in = config.in_channels
    for i, c_out in enumerate(config.extractor_channels):
        params.update(init_block(rng, c_in, c_out, config.temporal_kernel, config.num_nodes, f"block{i}"))
        c_in = c_out
    return params


def init_head(config: ModelConfig, rng: np.random.Generator, kind: str) -> dict[str, np.ndarray]:
    out = config.num_classes if kind == "target" else config.source_out
    params = init_block(rng, config.feature_channels, config.head_channels, config.temporal_kernel,
                        config.num_nodes, "head")
    params["fc.W"] = rng.normal(0.0, np.sqrt(1.0 / config.head_channels), size=(config.head_channels, out))
    params["fc.b"] = np.zeros(out)
    return params


def init_parameters(config: ModelConfig, rng: np.random.Generator, with_source: bool = True) -> ModelParameters:
    phi = init_extractor(config, rng)
    theta_t = init_head(config, rng, "target")
    theta_s = init_head(config, rng, "source") if with_source else {}
    return ModelParameters(phi=phi, theta_t=theta_t, theta_s=theta_s)


# ------------------------------------------------------------------ forward


def stgcn_block_forward(x, graph, params: dict, prefix: str = "block") -> ad.Tensor:
    """One spatial graph convolution, a same-padded temporal convolution, then ReLU.

    ``x`` is ``(B, P, L, C_in)`` (or unbatched ``(P, L, C_in)``); ``graph`` is
    the renormalized adjacency, ``(P, P)`` or one per sample ``(B, P, P)``.
    """
    x = ad.as_tensor(x)
    graph = ad.as_tensor(graph)
    W = ad.as_tensor(params[f"{prefix}.W"])
    T = ad.as_tensor(params[f"{prefix}.T"])
    E = ad.as_tensor(params[f"{prefix}.E"])
    if x.ndim not in (3, 4):
        raise ad.ShapeError(f"block input must be (B, P, L, C) or (P, L, C), got {x.shape}")
    P, L, c_in = x.shape[-3:]
    if graph.shape[-2:] != (P, P) or E.shape != (P, P):
        raise ad.ShapeError(f"graph {graph.shape} / edge importance {E.shape} do not match {P} nodes")
    if W.shape[0] != c_in:
        raise ad.ShapeError(f"block expects {W.shape[0]} input channels, got {c_in}")
    c_out = W.shape[1]
    lead = x.shape[:-3]

    h = ad.matmul(x, W)  # (..., P, L, C_out)
    h = ad.reshape(h, lead + (P, L * c_out))
    h = ad.matmul(ad.mul(graph, E), h)
    h = ad.reshape(h, lead + (P, L, c_out))
    h = ad.conv1d(h, T, padding="same")
    return ad.relu(h)


def feature_extractor_forward(x, graph, phi: dict) -> ad.Tensor:
    h = x
    i = 0
    while f"block{i}.W" in phi:
        h = stgcn_block_forward(h, graph, phi, prefix=f"block{i}")
        i += 1
    return h


def global_average_pool(features) -> ad.Tensor:
    """Mean over the node and time axes: ``(..., P, L, C) -> (..., C)``."""
    return ad.mean(features, axis=(-3, -2))


def head_forward(features, graph, head: dict, head_kind: str = "target") -> ad.Tensor:
    """Head block, pooling, fully-connected map.

    Returns class logits for ``head_kind="target"`` and embeddings (or
    auxiliary-class logits) for ``"source"``; the computation is the same.
    """
    if head_kind not in ("target", "source"):
        raise ValueError(f"head_kind must be 'target' or 'source', got {head_kind!r}")
    h = stgcn_block_forward(features, graph, head, prefix="head")
    pooled = global_average_pool(h)
    if pooled.shape[-1] != head["fc.W"].shape[0]:
        raise ad.ShapeError(f"fc expects {head['fc.W'].shape[0]} features, got {pooled.shape[-1]}")
    return ad.add(ad.matmul(ad.reshape(pooled, (-1, pooled.shape[-1])), head["fc.W"]), head["fc.b"])


def predict_proba(params: ModelParameters, x, graph) -> np.ndarray:
    logits = head_forward(feature_extractor_forward(x, graph, params.phi), graph, params.theta_t).data
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def node_importance(phi: dict, block: int | None = None) -> np.ndarray:
    """Symmetrized row sums of an extractor block's edge-importance magnitudes.

    Defaults to the last extractor block.
    """
    if block is None:
        block = max(int(k.split(".")[0][5:]) for k in phi if k.startswith("block"))
    E = np.abs(np.asarray(phi[f"block{block}.E"], dtype=np.float64))
    return (E.sum(axis=1) + E.sum(axis=0)) / 2.0


# ------------------------------------------------------------------ checkpoint


def save_checkpoint(path, config: ModelConfig, params: ModelParameters, seed: int, extra: dict | None = None) -> None:
    """Write a JSON checkpoint; float64 values round-trip exactly via ``repr``."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": int(seed),
        "model": {**asdict(config), "extractor_channels": list(config.extractor_channels)},
        "parameters": {
            part: {name: {"shape": list(arr.shape), "data": [float(v) for v in np.ravel(arr)]}
                   for name, arr in sorted(values.items())}
            for part, values in params.partitions().items()
        },
    }
    if extra:
        doc["extra"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[ModelConfig, ModelParameters, int, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = ModelConfig(**doc["model"])
    parts = {
        part: {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
               for name, entry in values.items()}
        for part, values in doc["parameters"].items()
    }
    return config, ModelParameters(**parts), int(doc["seed"]), doc.get("extra", {})
