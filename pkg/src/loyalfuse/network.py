"""The trainable model: profile subnet, feature fusion, output subnet.

Text arrives pre-encoded (frozen encoder, never trained here).  The
profile subnet is a small tanh MLP over the feature vector; its output is
concatenated with the text feature map and pushed through the output
subnet (tanh hidden layers, 2-unit linear head, softmax).  Unimodal
variants bypass the fusion: text-only feeds the embedding straight into
the output subnet, profile-only fuses nothing but the profile subnet's
feature map.

All arithmetic is float64 and gradients are exact analytic backprop, so
they can be checked against central finite differences at tight
tolerance.  Two-class softmax with cross-entropy is used as the binary
cross-entropy loss (the two are mathematically equivalent).
"""

from __future__ import annotations

import struct
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODALITIES = ("Both", "X1", "X2")
N_CLASSES = 2

PROB_CLAMP = 1e-12

_MLP_MAGIC = b"MLP1"
_MODALITY_CODE = {"X1": 1, "X2": 2, "Both": 3}
_CODE_MODALITY = {v: k for k, v in _MODALITY_CODE.items()}


class NetworkError(Exception):
    """Inconsistent architecture, shapes, or checkpoint contents."""


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: modality plus layer widths."""

    modality: str
    d_text: int = 0
    j_in: int = 0
    x2_hidden: tuple[int, ...] = (10, 10)
    out_hidden: tuple[int, ...] = (10, 10)

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise NetworkError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.uses_x1 and self.d_text <= 0:
            raise NetworkError(f"modality {self.modality} needs d_text > 0, got {self.d_text}")
        if self.uses_x2:
            if self.j_in <= 0:
                raise NetworkError(f"modality {self.modality} needs j_in > 0, got {self.j_in}")
            if not self.x2_hidden or any(w <= 0 for w in self.x2_hidden):
                raise NetworkError(f"bad profile-subnet widths {self.x2_hidden}")
        if any(w <= 0 for w in self.out_hidden):
            raise NetworkError(f"bad output-subnet widths {self.out_hidden}")
        # blank out whatever the modality ignores so equivalent specs compare equal
        if not self.uses_x1:
            object.__setattr__(self, "d_text", 0)
        if not self.uses_x2:
            object.__setattr__(self, "j_in", 0)
            object.__setattr__(self, "x2_hidden", ())

    @property
    def uses_x1(self) -> bool:
        return self.modality in ("X1", "Both")

    @property
    def uses_x2(self) -> bool:
        return self.modality in ("X2", "Both")

    @property
    def j_out(self) -> int:
        return self.x2_hidden[-1] if self.uses_x2 else 0

    @property
    def fusion_width(self) -> int:
        return (self.d_text if self.uses_x1 else 0) + self.j_out

    def x2_dims(self) -> list[tuple[int, int]]:
        if not self.uses_x2:
            return []
        widths = [self.j_in, *self.x2_hidden]
        return list(zip(widths[:-1], widths[1:]))

    def out_dims(self) -> list[tuple[int, int]]:
        widths = [self.fusion_width, *self.out_hidden, N_CLASSES]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class LayerParams:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray   # (fan_out,)


@dataclass
class MLPParams:
    """All trainable state; the text encoder has none."""

    spec: NetworkSpec
    x2_layers: list[LayerParams]
    out_layers: list[LayerParams]

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Flat (path, array) view in a fixed order; arrays are live references."""
        out: list[tuple[str, np.ndarray]] = []
        for i, layer in enumerate(self.x2_layers):
            out.append((f"x2_layers[{i}].weights", layer.weights))
            out.append((f"x2_layers[{i}].biases", layer.biases))
        for i, layer in enumerate(self.out_layers):
            out.append((f"out_layers[{i}].weights", layer.weights))
            out.append((f"out_layers[{i}].biases", layer.biases))
        return out

    def copy(self) -> "MLPParams":
        return deepcopy(self)


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, plus the batch predictions."""

    x2_pre: list[np.ndarray]
    x2_act: list[np.ndarray]   # [input, tanh(z1), ...]; last entry is the profile feature map
    fused: np.ndarray
    out_pre: list[np.ndarray]
    out_act: list[np.ndarray]  # [fused, tanh(z1), ...]; head pre-activation excluded
    logits: np.ndarray
    probs: np.ndarray


def init_params(spec: NetworkSpec, seed: int = 0) -> MLPParams:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)

    def make(dims: list[tuple[int, int]]) -> list[LayerParams]:
        layers = []
        for fan_in, fan_out in dims:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(LayerParams(
                weights=rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                biases=np.zeros(fan_out),
            ))
        return layers

    return MLPParams(spec=spec, x2_layers=make(spec.x2_dims()), out_layers=make(spec.out_dims()))


def zeros_like_params(params: MLPParams) -> MLPParams:
    return MLPParams(
        spec=params.spec,
        x2_layers=[LayerParams(np.zeros_like(l.weights), np.zeros_like(l.biases))
                   for l in params.x2_layers],
        out_layers=[LayerParams(np.zeros_like(l.weights), np.zeros_like(l.biases))
                    for l in params.out_layers],
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(name: str, batch, width: int, n: int | None) -> np.ndarray:
    if batch is None:
        raise NetworkError(f"{name} input is required for this modality")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise NetworkError(f"{name} batch must have width {width}, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise NetworkError(f"{name} batch size {x.shape[0]} != {n}")
    return x


def forward(params: MLPParams, x1_batch: np.ndarray | None = None,
            x2_batch: np.ndarray | None = None) -> ForwardTrace:
    """Run the fused network; inputs for unused modalities are ignored."""
    spec = params.spec
    n: int | None = None
    x1 = None
    if spec.uses_x1:
        x1 = _check_batch("text", x1_batch, spec.d_text, n)
        n = x1.shape[0]

    x2_pre: list[np.ndarray] = []
    x2_act: list[np.ndarray] = []
    if spec.uses_x2:
        a = _check_batch("profile", x2_batch, spec.j_in, n)
        n = a.shape[0]
        x2_act.append(a)
        for layer in params.x2_layers:
            z = a @ layer.weights + layer.biases
            a = np.tanh(z)
            x2_pre.append(z)
            x2_act.append(a)

    pieces = []
    if spec.uses_x1:
        pieces.append(x1)
    if spec.uses_x2:
        pieces.append(x2_act[-1])
    fused = np.concatenate(pieces, axis=1) if len(pieces) > 1 else pieces[0]

    out_pre: list[np.ndarray] = []
    out_act: list[np.ndarray] = [fused]
    a = fused
    for layer in params.out_layers[:-1]:
        z = a @ layer.weights + layer.biases
        a = np.tanh(z)
        out_pre.append(z)
        out_act.append(a)
    head = params.out_layers[-1]
    logits = a @ head.weights + head.biases
    probs = softmax(logits)
    return ForwardTrace(x2_pre=x2_pre, x2_act=x2_act, fused=fused,
                        out_pre=out_pre, out_act=out_act, logits=logits, probs=probs)


def _check_labels(labels, n: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise NetworkError(f"labels must have shape ({n},), got {y.shape}")
    if y.size and not np.isin(y, (0, 1)).all():
        raise NetworkError("labels must be 0 or 1")
    return y.astype(np.int64)


def loss(trace: ForwardTrace, labels) -> float:
    """Mean negative log-probability of the true class, clamp-protected."""
    n = trace.probs.shape[0]
    y = _check_labels(labels, n)
    p_true = trace.probs[np.arange(n), y]
    p_true = np.clip(p_true, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.log(p_true).mean())


def backward(params: MLPParams, trace: ForwardTrace, labels) -> MLPParams:
    """Exact gradients of :func:`loss` w.r.t. every trainable array.

    The gradient flowing into the text feature map is computed as part of
    the fusion split and then dropped: the encoder is frozen.
    """
    spec = params.spec
    n = trace.probs.shape[0]
    y = _check_labels(labels, n)
    grads = zeros_like_params(params)

    # Softmax + cross-entropy head: d(logits) = (p - onehot) / n.
    delta = trace.probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    for k in range(len(params.out_layers) - 1, -1, -1):
        a_prev = trace.out_act[k]
        grads.out_layers[k].weights[:] = a_prev.T @ delta
        grads.out_layers[k].biases[:] = delta.sum(axis=0)
        d_prev = delta @ params.out_layers[k].weights.T
        if k > 0:
            delta = d_prev * (1.0 - a_prev ** 2)
        else:
            d_fused = d_prev

    if spec.uses_x2:
        d_x2 = d_fused[:, spec.d_text if spec.uses_x1 else 0:]
        delta = d_x2 * (1.0 - trace.x2_act[-1] ** 2)
        for k in range(len(params.x2_layers) - 1, -1, -1):
            a_prev = trace.x2_act[k]
            grads.x2_layers[k].weights[:] = a_prev.T @ delta
            grads.x2_layers[k].biases[:] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ params.x2_layers[k].weights.T) * (1.0 - a_prev ** 2)
    return grads


def predict(trace: ForwardTrace) -> np.ndarray:
    """Argmax class per row; an exact tie goes to class 0."""
    return (trace.probs[:, 1] > trace.probs[:, 0]).astype(np.int64)


def accuracy(predictions: np.ndarray, labels) -> float:
    y = np.asarray(labels)
    if len(y) == 0:
        raise NetworkError("cannot score an empty batch")
    return float((np.asarray(predictions) == y).mean())


def save_checkpoint(params: MLPParams, path: str | Path) -> None:
    """Versioned binary checkpoint (magic ``MLP1``), bit-exact round trip."""
    spec = params.spec
    parts = [_MLP_MAGIC, struct.pack("<BII", _MODALITY_CODE[spec.modality],
                                     spec.d_text, spec.j_in)]
    for chain in (params.x2_layers, params.out_layers):
        parts.append(struct.pack("<B", len(chain)))
        for layer in chain:
            parts.append(struct.pack("<II", *layer.weights.shape))
    for chain in (params.x2_layers, params.out_layers):
        for layer in chain:
            parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> MLPParams:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise NetworkError(f"truncated checkpoint: {path}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != _MLP_MAGIC:
        raise NetworkError(f"not a model checkpoint (bad magic): {path}")
    code, d_text, j_in = struct.unpack("<BII", take(9))
    if code not in _CODE_MODALITY:
        raise NetworkError(f"unknown modality code {code} in {path}")
    modality = _CODE_MODALITY[code]
    dims: list[list[tuple[int, int]]] = []
    for _ in range(2):
        (count,) = struct.unpack("<B", take(1))
        dims.append([struct.unpack("<II", take(8)) for _ in range(count)])
    x2_dims, out_dims = dims
    if not out_dims or out_dims[-1][1] != N_CLASSES:
        raise NetworkError(f"checkpoint head width must be {N_CLASSES}: {path}")
    spec = NetworkSpec(modality=modality, d_text=d_text, j_in=j_in,
                       x2_hidden=tuple(fo for _, fo in x2_dims),
                       out_hidden=tuple(fo for _, fo in out_dims[:-1]))
    if spec.x2_dims() != [tuple(d) for d in x2_dims] or spec.out_dims() != [tuple(d) for d in out_dims]:
        raise NetworkError(f"inconsistent dimension chain in {path}")

    def read_chain(chain_dims) -> list[LayerParams]:
        layers = []
        for fan_in, fan_out in chain_dims:
            w = np.frombuffer(take(fan_in * fan_out * 8), dtype="<f8").reshape(fan_in, fan_out).copy()
            b = np.frombuffer(take(fan_out * 8), dtype="<f8").copy()
            layers.append(LayerParams(weights=w, biases=b))
        return layers

    x2_layers = read_chain(x2_dims)
    out_layers = read_chain(out_dims)
    if pos != len(data):
        raise NetworkError(f"trailing bytes in checkpoint: {path}")
    return MLPParams(spec=spec, x2_layers=x2_layers, out_layers=out_layers)
