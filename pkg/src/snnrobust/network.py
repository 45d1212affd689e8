"""Masked feed-forward networks built from layered DAGs.

A network holds one weight group per (source layer, target layer) pair that
carries connections. Each group stores a dense weight matrix W of shape
(target_units, source_units) and a binary mask M of the same shape; only
W * M ever enters the forward pass, and masked positions are pinned to zero
through initialization, every optimizer step, and pruning.

Group wiring:
  * input group: source_layer == -1, feeds layer 0 (the in-degree-0
    vertices), mask all ones;
  * hidden groups: source_layer s >= 0 to target_layer l <= last hidden
    layer, mask entries mirror the DAG edge set;
  * output groups: target_layer == len(layer_units); sink units (no
    outgoing DAG edge, whatever their layer) connect densely to the outputs,
    non-sink columns are masked off.

Hidden layers apply ReLU; the output layer is affine followed by softmax.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, LayeredDag

CHECKPOINT_MAGIC = b"SNNCKPT1"
CHECKPOINT_SCHEMA_VERSION = 1

INIT_METHODS = ("G_N", "G_U", "He_N", "He_U", "N", "U")


class NetworkError(ValueError):
    """Invalid network construction or use."""


class StaleCacheError(RuntimeError):
    """A forward cache no longer matches the network parameters."""


@dataclass
class WeightGroup:
    """One masked weight matrix from source_layer to target_layer.

    source_layer -1 denotes the network input; target_layer equal to the
    number of hidden layers denotes the network output.
    """

    source_layer: int
    target_layer: int
    weights: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.weights.shape != self.mask.shape:
            raise NetworkError("weights and mask shapes differ")

    @property
    def n_connections(self) -> int:
        return int(self.mask.sum())

    def effective(self) -> np.ndarray:
        return self.weights * self.mask


@dataclass
class MaskedNetwork:
    input_dim: int
    output_dim: int
    layer_units: list[int]
    layer_vertices: list[list[int]]
    sinks: list[int]
    groups: list[WeightGroup]
    biases: list[np.ndarray]  # one per hidden layer, then the output bias
    init_method: str | None = None
    version: int = field(default=0, repr=False)

    @property
    def n_layers(self) -> int:
        return len(self.layer_units)

    def mark_mutated(self) -> None:
        self.version += 1

    def hidden_groups(self) -> list[WeightGroup]:
        return [g for g in self.groups
                if g.source_layer >= 0 and g.target_layer < self.n_layers]

    def output_groups(self) -> list[WeightGroup]:
        return [g for g in self.groups if g.target_layer == self.n_layers]

    def copy(self) -> "MaskedNetwork":
        return MaskedNetwork(
            input_dim=self.input_dim,
            output_dim=self.output_dim,
            layer_units=list(self.layer_units),
            layer_vertices=[list(vs) for vs in self.layer_vertices],
            sinks=list(self.sinks),
            groups=[WeightGroup(g.source_layer, g.target_layer,
                                g.weights.copy(), g.mask.copy())
                    for g in self.groups],
            biases=[b.copy() for b in self.biases],
            init_method=self.init_method,
        )

    def assert_mask_invariant(self) -> None:
        for g in self.groups:
            if not np.all(g.weights[g.mask == 0] == 0.0):
                raise NetworkError("nonzero weight at masked position")


@dataclass
class ForwardCache:
    x: np.ndarray            # (batch, input_dim)
    pre: list[np.ndarray]    # pre-activations per hidden layer
    acts: list[np.ndarray]   # post-ReLU activations per hidden layer
    logits: np.ndarray
    probs: np.ndarray
    single: bool
    version: int


def build_network(ld: LayeredDag, input_dim: int, output_dim: int) -> MaskedNetwork:
    """Construct the masked network induced by a layered DAG.

    One group per adjacent layer pair, one skip group per non-adjacent pair
    that carries at least one edge, an all-ones input group into layer 0,
    and per-layer output groups whose masks select the sink units.
    """
    if ld.dag.vertex_count < 1 or not ld.layers:
        raise NetworkError("layered DAG must contain at least one vertex")
    if input_dim < 1 or output_dim < 1:
        raise NetworkError("input_dim and output_dim must be >= 1")

    layers = [list(layer) for layer in ld.layers]
    n_layers = len(layers)
    units = [len(layer) for layer in layers]
    pos: dict[int, int] = {}
    for layer in layers:
        for i, v in enumerate(layer):
            pos[v] = i

    edge_masks: dict[tuple[int, int], np.ndarray] = {}
    for s in range(n_layers - 1):
        edge_masks[(s, s + 1)] = np.zeros((units[s + 1], units[s]))
    for u, v in ld.dag.directed_edges:
        s, l = ld.layer_index[u], ld.layer_index[v]
        if (s, l) not in edge_masks:
            edge_masks[(s, l)] = np.zeros((units[l], units[s]))
        edge_masks[(s, l)][pos[v], pos[u]] = 1.0

    groups = [WeightGroup(-1, 0, np.zeros((units[0], input_dim)),
                          np.ones((units[0], input_dim)))]
    for (s, l) in sorted(edge_masks):
        m = edge_masks[(s, l)]
        groups.append(WeightGroup(s, l, np.zeros_like(m), m))

    sink_set = set(ld.sinks)
    for t in range(n_layers):
        cols = [i for i, v in enumerate(layers[t]) if v in sink_set]
        if not cols:
            continue
        m = np.zeros((output_dim, units[t]))
        m[:, cols] = 1.0
        groups.append(WeightGroup(t, n_layers, np.zeros_like(m), m))

    biases = [np.zeros(u) for u in units] + [np.zeros(output_dim)]
    return MaskedNetwork(
        input_dim=input_dim,
        output_dim=output_dim,
        layer_units=units,
        layer_vertices=layers,
        sinks=sorted(sink_set),
        groups=groups,
        biases=biases,
    )


def _fan(shape: tuple[int, int]) -> tuple[int, int]:
    fan_out, fan_in = shape
    return fan_in, fan_out


def init_weights(net: MaskedNetwork, method: str, seed: int) -> MaskedNetwork:
    """Return a copy of `net` with freshly initialized weights.

    Methods: G_N / G_U (Glorot normal/uniform, gain sqrt(2)), He_N / He_U
    (fan-in Kaiming with a=0, gain sqrt(2)), N (normal, mean 0, std 0.1),
    U (uniform on [-0.1, 0.1]). Biases stay zero; masked entries are forced
    back to zero after sampling.
    """
    if method not in INIT_METHODS:
        raise NetworkError(f"unknown init method {method!r}; expected one of {INIT_METHODS}")
    rng = np.random.default_rng(seed)
    gain = np.sqrt(2.0)
    out = net.copy()
    for g in out.groups:
        fan_in, fan_out = _fan(g.weights.shape)
        if method == "G_N":
            std = gain * np.sqrt(2.0 / (fan_in + fan_out))
            w = rng.normal(0.0, std, size=g.weights.shape)
        elif method == "G_U":
            bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=g.weights.shape)
        elif method == "He_N":
            std = gain / np.sqrt(fan_in)
            w = rng.normal(0.0, std, size=g.weights.shape)
        elif method == "He_U":
            bound = gain * np.sqrt(3.0 / fan_in)
            w = rng.uniform(-bound, bound, size=g.weights.shape)
        elif method == "N":
            w = rng.normal(0.0, 0.1, size=g.weights.shape)
        else:  # "U"
            w = rng.uniform(-0.1, 0.1, size=g.weights.shape)
        g.weights = w * g.mask
    for i, b in enumerate(out.biases):
        out.biases[i] = np.zeros_like(b)
    out.init_method = method
    out.mark_mutated()
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: MaskedNetwork, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Run the network on one input vector or a (batch, input_dim) array.

    Returns (logits, class probabilities, cache); the cache feeds backward().
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise NetworkError(f"input must have {net.input_dim} features, got shape {x.shape}")

    L = net.n_layers
    by_target: dict[int, list[WeightGroup]] = {}
    for g in net.groups:
        by_target.setdefault(g.target_layer, []).append(g)

    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = []
    for l in range(L):
        z = np.broadcast_to(net.biases[l], (X.shape[0], net.layer_units[l])).copy()
        for g in by_target.get(l, []):
            src = X if g.source_layer == -1 else acts[g.source_layer]
            z += src @ g.effective().T
        pre.append(z)
        acts.append(np.maximum(z, 0.0))

    logits = np.broadcast_to(net.biases[L], (X.shape[0], net.output_dim)).copy()
    for g in by_target.get(L, []):
        logits += acts[g.source_layer] @ g.effective().T
    probs = softmax(logits)

    cache = ForwardCache(x=X, pre=pre, acts=acts, logits=logits, probs=probs,
                         single=single, version=net.version)
    if single:
        return logits[0], probs[0], cache
    return logits, probs, cache


def cross_entropy(logits: np.ndarray, labels: np.ndarray | int) -> float:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))


def backward(
    net: MaskedNetwork, cache: ForwardCache, label: np.ndarray | int
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Gradients of the mean cross-entropy loss for the cached forward pass.

    Returns (weight gradients aligned with net.groups, bias gradients aligned
    with net.biases, gradient with respect to the input). Gradients at masked
    positions are zero. ReLU takes derivative 0 at exactly 0.
    """
    if cache.version != net.version:
        raise StaleCacheError("forward cache predates a parameter mutation")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    B = cache.x.shape[0]
    if labels.shape[0] != B:
        raise NetworkError(f"got {labels.shape[0]} labels for batch of {B}")

    L = net.n_layers
    onehot = np.zeros_like(cache.probs)
    onehot[np.arange(B), labels] = 1.0
    dlogits = (cache.probs - onehot) / B

    d_acts = [np.zeros_like(a) for a in cache.acts]
    dx = np.zeros_like(cache.x)
    weight_grads: list[np.ndarray] = [None] * len(net.groups)  # type: ignore[list-item]
    bias_grads: list[np.ndarray] = [None] * len(net.biases)  # type: ignore[list-item]
    bias_grads[L] = dlogits.sum(axis=0)

    by_target: dict[int, list[tuple[int, WeightGroup]]] = {}
    for gi, g in enumerate(net.groups):
        by_target.setdefault(g.target_layer, []).append((gi, g))

    for gi, g in by_target.get(L, []):
        weight_grads[gi] = (dlogits.T @ cache.acts[g.source_layer]) * g.mask
        d_acts[g.source_layer] += dlogits @ g.effective()

    for l in range(L - 1, -1, -1):
        dz = d_acts[l] * (cache.pre[l] > 0.0)
        bias_grads[l] = dz.sum(axis=0)
        for gi, g in by_target.get(l, []):
            src = cache.x if g.source_layer == -1 else cache.acts[g.source_layer]
            weight_grads[gi] = (dz.T @ src) * g.mask
            if g.source_layer == -1:
                dx += dz @ g.effective()
            else:
                d_acts[g.source_layer] += dz @ g.effective()

    input_grad = dx[0] if cache.single else dx
    return weight_grads, bias_grads, input_grad


def param_count(net: MaskedNetwork) -> int:
    """Unmasked weight count plus all bias lengths."""
    return int(sum(g.n_connections for g in net.groups)
               + sum(b.size for b in net.biases))


def prune_random(net: MaskedNetwork, alpha: float, seed: int) -> MaskedNetwork:
    """Zero floor(alpha * nonzero) hidden-to-hidden mask entries uniformly.

    Input and output groups are untouched; pruned positions have both mask
    and weight set to zero in the returned copy.
    """
    if not (0.0 <= alpha <= 1.0):
        raise NetworkError(f"alpha must be in [0,1], got {alpha}")
    out = net.copy()
    hidden = out.hidden_groups()
    sizes = [g.n_connections for g in hidden]
    total = sum(sizes)
    k = int(np.floor(alpha * total))
    if k == 0:
        return out
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=k, replace=False)
    offsets = np.cumsum([0] + sizes)
    chosen.sort()
    for g, lo, hi in zip(hidden, offsets[:-1], offsets[1:]):
        local = chosen[(chosen >= lo) & (chosen < hi)] - lo
        if local.size == 0:
            continue
        rows, cols = np.nonzero(g.mask)
        g.mask[rows[local], cols[local]] = 0.0
        g.weights[rows[local], cols[local]] = 0.0
    out.mark_mutated()
    return out


def network_to_graph(net: MaskedNetwork) -> Dag:
    """Recover the hidden-structure DAG: one vertex per hidden unit, one
    directed edge per surviving hidden-group mask entry."""
    n = sum(net.layer_units)
    edges = set()
    for g in net.hidden_groups():
        src_vs = net.layer_vertices[g.source_layer]
        tgt_vs = net.layer_vertices[g.target_layer]
        for j, i in zip(*np.nonzero(g.mask)):
            edges.add((src_vs[i], tgt_vs[j]))
    return Dag(n, frozenset(edges))


def save_checkpoint(net: MaskedNetwork, path, extra: dict | None = None) -> None:
    """Write a checkpoint: JSON header, then per-group float32 weights and
    bit-packed masks in header order, then float32 biases."""
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "layer_units": list(net.layer_units),
        "layer_vertices": [list(v) for v in net.layer_vertices],
        "sinks": list(net.sinks),
        "init_method": net.init_method,
        "groups": [
            {"source_layer": g.source_layer, "target_layer": g.target_layer,
             "shape": list(g.weights.shape)}
            for g in net.groups
        ],
        "bias_lengths": [int(b.size) for b in net.biases],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for g in net.groups:
            f.write(g.weights.astype("<f4").tobytes())
            f.write(np.packbits(g.mask.astype(np.uint8)).tobytes())
        for b in net.biases:
            f.write(b.astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[MaskedNetwork, dict]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise NetworkError(f"bad checkpoint magic {magic!r}")
        (blob_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(blob_len).decode("utf-8"))
        if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise NetworkError("unsupported checkpoint schema version")
        groups = []
        for gd in header["groups"]:
            shape = tuple(gd["shape"])
            size = shape[0] * shape[1]
            w = np.frombuffer(f.read(4 * size), dtype="<f4").astype(np.float64).reshape(shape)
            packed = np.frombuffer(f.read((size + 7) // 8), dtype=np.uint8)
            m = np.unpackbits(packed, count=size).astype(np.float64).reshape(shape)
            groups.append(WeightGroup(gd["source_layer"], gd["target_layer"], w, m))
        biases = []
        for blen in header["bias_lengths"]:
            biases.append(np.frombuffer(f.read(4 * blen), dtype="<f4").astype(np.float64))
    net = MaskedNetwork(
        input_dim=header["input_dim"],
        output_dim=header["output_dim"],
        layer_units=list(header["layer_units"]),
        layer_vertices=[list(v) for v in header["layer_vertices"]],
        sinks=list(header["sinks"]),
        groups=groups,
        biases=biases,
        init_method=header.get("init_method"),
    )
    return net, header
