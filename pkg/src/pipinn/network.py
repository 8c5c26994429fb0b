"""Trunk networks producing the embedding that the output head acts on.

Two variants are supported:

``concat_skip``
    sine MLP whose first pre-activation is scaled by ``F*pi`` (frequency
    annealing) and whose embedding concatenates every hidden activation,
    deepest layer first.  Width is ``hidden_layers * nodes``.
``plain_mlp``
    ordinary MLP (tanh by default); the embedding is the last hidden layer.

Inputs are mapped affinely from ``[input_lower, input_upper]`` to
``[-1, 1]`` before the first layer.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import DenseLayer, JetSpec, Stack
from .errors import DimensionMismatch

VARIANTS = ("concat_skip", "plain_mlp")


@dataclass(frozen=True)
class NetConfig:
    variant: str = "concat_skip"
    input_dim: int = 2
    hidden_layers: int = 4
    nodes: int = 50
    freq_factor: float = 1.0
    activation: str = "sine"
    init_seed: int = 0
    input_lower: tuple = ()
    input_upper: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hidden_layers < 2:
            raise ValueError("hidden_layers must be >= 2")
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if not self.freq_factor > 0:
            raise ValueError("freq_factor must be positive")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        lo = tuple(float(v) for v in self.input_lower) or (-1.0,) * self.input_dim
        hi = tuple(float(v) for v in self.input_upper) or (1.0,) * self.input_dim
        if len(lo) != self.input_dim or len(hi) != self.input_dim:
            raise ValueError("input bounds must match input_dim")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("input_upper must exceed input_lower")
        object.__setattr__(self, "input_lower", lo)
        object.__setattr__(self, "input_upper", hi)

    @property
    def embedding_width(self) -> int:
        if self.variant == "concat_skip":
            return self.hidden_layers * self.nodes
        return self.nodes

    @property
    def first_scale(self) -> float:
        return self.freq_factor * np.pi if self.variant == "concat_skip" else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_lower"] = list(self.input_lower)
        d["input_upper"] = list(self.input_upper)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["input_lower"] = tuple(d.get("input_lower", ()))
        d["input_upper"] = tuple(d.get("input_upper", ()))
        return cls(**d)


@dataclass
class NetParams:
    weights: list
    biases: list
    heads: list = field(default_factory=list)

    def copy(self) -> "NetParams":
        return NetParams([np.array(w) for w in self.weights],
                         [np.array(b) for b in self.biases],
                         [np.array(h) for h in self.heads])

    def trunk_dict(self) -> dict:
        d = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            d[f"W{i}"] = w
            d[f"b{i}"] = b
        return d

    @classmethod
    def from_trunk_dict(cls, d: dict, heads=()) -> "NetParams":
        n = sum(1 for k in d if k.startswith("W"))
        return cls([d[f"W{i}"] for i in range(n)], [d[f"b{i}"] for i in range(n)], list(heads))


def init(config: NetConfig, rng: np.random.Generator | None = None) -> NetParams:
    """Fan-in uniform weights, zero biases; deterministic in ``init_seed``."""
    if rng is None:
        rng = np.random.default_rng(config.init_seed)
    weights, biases = [], []
    fan_in = config.input_dim
    for _ in range(config.hidden_layers):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, config.nodes)))
        biases.append(np.zeros(config.nodes))
        fan_in = config.nodes
    return NetParams(weights, biases)


def init_heads(config: NetConfig, count: int, rng: np.random.Generator) -> list:
    bound = np.sqrt(6.0 / (config.embedding_width + 1))
    return [rng.uniform(-bound, bound, size=config.embedding_width) for _ in range(count)]


def stack(weights, biases, config: NetConfig) -> Stack:
    """Computation description for :mod:`autodiff`; weights may be tape variables."""
    layers = []
    for i, (w, b) in enumerate(zip(weights, biases)):
        scale = config.first_scale if i == 0 else 1.0
        layers.append(DenseLayer(w, b, config.activation, scale))
    lo = np.asarray(config.input_lower)
    hi = np.asarray(config.input_upper)
    return Stack(layers, shift=0.5 * (lo + hi), spread=0.5 * (hi - lo),
                 concat=config.variant == "concat_skip")


def embed_jet(params: NetParams, config: NetConfig, points, spec: JetSpec) -> ad.JetBatch:
    return ad.forward_jets(stack(params.weights, params.biases, config), points, spec)


def embed(params: NetParams, config: NetConfig, points) -> np.ndarray:
    """Embedding ``x_L`` at one point (1-d result) or a batch (2-d)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    out = embed_jet(params, config, np.atleast_2d(pts), JetSpec(config.input_dim)).value
    return out[0] if single else out


def predict(params: NetParams, head, config: NetConfig, points) -> np.ndarray:
    if isinstance(head, (int, np.integer)):
        head = params.heads[head]
    head = np.asarray(head, dtype=np.float64)
    if head.shape != (config.embedding_width,):
        raise DimensionMismatch(
            f"head has shape {head.shape}, embedding width is {config.embedding_width}")
    return embed(params, config, points) @ head


class Trunk:
    """A frozen network viewed as a feature map over the problem's inputs.

    ``extra_inputs`` are appended to every point (the task parameters a plain
    MLP takes as input); jets are only ever taken along the leading
    ``problem`` dimensions.
    """

    def __init__(self, params: NetParams, config: NetConfig, extra_inputs=None):
        self.params = params
        self.config = config
        self.extra = None if extra_inputs is None else np.asarray(extra_inputs, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.config.embedding_width

    def _full(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.extra is None:
            return pts
        return np.hstack([pts, np.broadcast_to(self.extra, (len(pts), len(self.extra)))])

    def _spec(self, spec: JetSpec) -> JetSpec:
        return JetSpec(self.config.input_dim, spec.first_dirs, spec.second_dirs)

    def jets(self, points, spec: JetSpec) -> ad.JetBatch:
        return embed_jet(self.params, self.config, self._full(points), self._spec(spec))

    def embed(self, points) -> np.ndarray:
        return embed(self.params, self.config, self._full(points))

    def tape_jets(self, weights, biases, points, spec: JetSpec) -> ad.JetBatch:
        """Jets with (possibly tape-variable) trunk weights substituted."""
        return ad.forward_jets(stack(weights, biases, self.config), self._full(points),
                               self._spec(spec))


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

MAGIC = b"PIPINNM1"


def save_model(path, config: NetConfig, params: NetParams, meta: dict | None = None,
               extra_tensors: dict | None = None) -> None:
    """Write config, metadata and parameters to one self-describing file.

    Layout: 8-byte magic ``PIPINNM1`` (format version 1), little-endian
    uint64 header length, UTF-8 JSON header, then every tensor listed in the
    header as contiguous little-endian float64 in C order.
    """
    tensors = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        tensors += [(f"W{i}", w), (f"b{i}", b)]
    tensors += [(f"head{k}", h) for k, h in enumerate(params.heads)]
    tensors += sorted((extra_tensors or {}).items())
    header = {
        "format_version": 1,
        "config": config.to_dict(),
        "meta": meta or {},
        "n_layers": len(params.weights),
        "n_heads": len(params.heads),
        "tensors": [{"name": n, "shape": list(np.shape(t))} for n, t in tensors],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for _, t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_model(path):
    """Inverse of :func:`save_model`: ``(config, params, meta, extra_tensors)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
        arrays[t["name"]] = arr.reshape(t["shape"])
        offset += 8 * n
    nl, nh = header["n_layers"], header["n_heads"]
    params = NetParams([arrays.pop(f"W{i}") for i in range(nl)],
                       [arrays.pop(f"b{i}") for i in range(nl)],
                       [arrays.pop(f"head{k}") for k in range(nh)])
    return NetConfig.from_dict(header["config"]), params, header["meta"], arrays
