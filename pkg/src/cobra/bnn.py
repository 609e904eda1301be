"""Entropy-gated sparse feed-forward network ("Bernoulli network").

The network has two hidden ReLU layers and one sigmoid output. Both its
width and its wiring are derived from how informative each input is,
measured by the average Bernoulli entropy ``hbar`` of the input's values
in the training data (0 for raw context features, which are not
probabilities).

Widths. With ``S = ceil(sum_j (1 - hbar_j))`` the layer widths are::

    |L1| = 2*S + 3        |L2| = floor(4*S/3) + 3        |L3| = 1

which is the closed-form fixed point of the two-thirds width recursion.

Wiring. A node ``i`` with entropy ``h`` going into a layer of width ``W``
connects to ``min(W, max(m, floor(W - h*W)))`` units, where ``m`` is 1 for
any node that itself receives a connection (or an input with ``h < 1``)
and 0 otherwise. The ``m`` clamp keeps the graph connected: without it any
node with ``h > 0`` would be cut off from the width-1 output layer. Edge
targets are assigned cyclically starting at offset ``i mod W`` so that
in-degrees stay balanced. A hidden node's entropy is the mean entropy of
its connected predecessors. If every input has entropy 1 the gate would
prune everything, so that degenerate case falls back to full
connectivity.

The Dense variant keeps the same widths but allows every edge; it is the
ablation the sparse network is benchmarked against.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import kernels

ACTIVATIONS = ("relu", "relu", "sigmoid")


class NetworkFormatError(ValueError):
    """Raised when a stored network file cannot be parsed."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


def compute_widths(input_entropies) -> tuple[int, int, int]:
    """Layer widths (|L1|, |L2|, |L3|) from per-input average entropies."""
    hbar = np.asarray(input_entropies, dtype=np.float64)
    if hbar.size and ((hbar < 0).any() or (hbar > 1).any()):
        raise ValueError("entropies must lie in [0, 1]")
    s = gate_strength(hbar)
    return 2 * s + 3, (4 * s) // 3 + 3, 1


def gate_strength(input_entropies) -> int:
    """S = ceil(sum(1 - hbar)); the driver of the width closed form."""
    total = float(np.sum(1.0 - np.asarray(input_entropies, dtype=np.float64)))
    # guard against float noise pushing an exact integer over the ceiling
    return max(0, math.ceil(total - 1e-9))


def fan_out(width: int, h: float, has_support: bool) -> int:
    """Number of units a node connects to in a layer of ``width``.

    ``has_support`` is the ``m`` clamp: true when the node itself carries
    signal (an input with h < 1, or a hidden node with an incoming edge).
    """
    base = math.floor(width - h * width)
    m = 1 if has_support else 0
    return min(width, max(m, base))


@dataclass(eq=False)
class BnnTopology:
    """Widths, per-node entropies and boolean edge masks of the network."""

    widths: tuple[int, int, int, int]
    input_entropies: np.ndarray
    is_context: np.ndarray
    masks: tuple[np.ndarray, np.ndarray, np.ndarray]
    node_h: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    dense: bool = False
    _layout: list | None = field(default=None, repr=False, compare=False)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def edge_count(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def edge_layout(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Destination-major (src, dptr) arrays per transition.

        For transition t and destination j, the feeding sources are
        ``src[dptr[j]:dptr[j+1]]`` in ascending order.
        """
        if self._layout is None:
            layout = []
            for mask in self.masks:
                n_src, n_dst = mask.shape
                dptr = np.zeros(n_dst + 1, dtype=np.int32)
                dptr[1:] = np.cumsum(mask.sum(axis=0, dtype=np.int64))
                src = np.nonzero(mask.T)[1].astype(np.int32)
                layout.append((src, dptr))
            self._layout = layout
        return self._layout

    def in_degrees(self, transition: int) -> np.ndarray:
        return self.masks[transition].sum(axis=0)


def _place_edges(h_src: np.ndarray, support: np.ndarray, width: int) -> np.ndarray:
    """Cyclic edge placement for one transition; returns a boolean mask."""
    n_src = len(h_src)
    mask = np.zeros((n_src, width), dtype=bool)
    for i in range(n_src):
        f = fan_out(width, float(h_src[i]), bool(support[i]))
        for c in range(f):
            mask[i, (i + c) % width] = True
    return mask


def _node_entropies(mask: np.ndarray, h_src: np.ndarray) -> np.ndarray:
    """Mean predecessor entropy per destination; orphans get entropy 1."""
    n_dst = mask.shape[1]
    out = np.ones(n_dst)
    for j in range(n_dst):
        srcs = np.nonzero(mask[:, j])[0]
        if len(srcs):
            out[j] = float(np.mean(h_src[srcs]))
    return out


def _build(input_entropies, is_context, dense: bool) -> BnnTopology:
    hbar = np.asarray(input_entropies, dtype=np.float64).copy()
    n = hbar.size
    if n == 0:
        raise ValueError("network needs at least one input")
    if (hbar < 0).any() or (hbar > 1).any():
        raise ValueError("entropies must lie in [0, 1]")
    if is_context is None:
        ctx = np.zeros(n, dtype=bool)
    else:
        ctx = np.asarray(is_context, dtype=bool).copy()
        if ctx.shape != (n,):
            raise ValueError("is_context length must match entropies")
    hbar[ctx] = 0.0
    l1, l2, l3 = compute_widths(hbar)
    h0 = hbar.copy()
    full = dense or gate_strength(hbar) == 0
    if full:
        m1 = np.ones((n, l1), dtype=bool)
        m2 = np.ones((l1, l2), dtype=bool)
        m3 = np.ones((l2, l3), dtype=bool)
    else:
        m1 = _place_edges(h0, h0 < 1.0, l1)
        h1 = _node_entropies(m1, h0)
        m2 = _place_edges(h1, m1.any(axis=0), l2)
        h2 = _node_entropies(m2, h1)
        m3 = _place_edges(h2, m2.any(axis=0), l3)
    h1 = _node_entropies(m1, h0)
    h2 = _node_entropies(m2, h1)
    h3 = _node_entropies(m3, h2)
    return BnnTopology(
        widths=(n, l1, l2, l3),
        input_entropies=hbar,
        is_context=ctx,
        masks=(m1, m2, m3),
        node_h=(h0, h1, h2, h3),
        dense=dense,
    )


def build_topology(input_entropies, is_context=None) -> BnnTopology:
    """Entropy-gated topology (falls back to full wiring when S = 0)."""
    return _build(input_entropies, is_context, dense=False)


def build_dense_topology(input_entropies, is_context=None) -> BnnTopology:
    """Fully-connected ablation with the same widths."""
    return _build(input_entropies, is_context, dense=True)


@dataclass
class TrainHyperparams:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    momentum: float = 0.9
    seed: int = 0
    validation_fraction: float = 0.1
    patience: int | None = 10

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive or None")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    seconds: float


@dataclass
class BnnNetwork:
    """Topology plus per-edge weights and per-node biases."""

    topology: BnnTopology
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int
    activations: tuple[str, str, str] = ACTIVATIONS
    input_names: tuple[str, ...] | None = None
    hyperparams: TrainHyperparams | None = None

    @property
    def n_inputs(self) -> int:
        return self.topology.n_inputs

    def dense_matrices(self) -> list[np.ndarray]:
        """Weights as dense matrices; pruned positions are exactly zero."""
        out = []
        for (src, dptr), w, mask in zip(
            self.topology.edge_layout(), self.weights, self.topology.masks
        ):
            dense = np.zeros(mask.shape)
            for j in range(mask.shape[1]):
                dense[src[dptr[j] : dptr[j + 1]], j] = w[dptr[j] : dptr[j + 1]]
            out.append(dense)
        return out

    def copy(self) -> "BnnNetwork":
        return BnnNetwork(
            topology=self.topology,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
            activations=self.activations,
            input_names=self.input_names,
            hyperparams=self.hyperparams,
        )


def init_network(
    topology: BnnTopology, seed: int = 0, input_names: Sequence[str] | None = None
) -> BnnNetwork:
    """Seeded Glorot-uniform weights on the allowed edges, zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for t, (src, dptr) in enumerate(topology.edge_layout()):
        n_src, n_dst = topology.masks[t].shape
        limit = math.sqrt(6.0 / (n_src + n_dst))
        weights.append(rng.uniform(-limit, limit, len(src)))
        biases.append(np.zeros(n_dst))
    names = tuple(input_names) if input_names is not None else None
    if names is not None and len(names) != topology.n_inputs:
        raise ValueError("input_names length must match network inputs")
    return BnnNetwork(topology=topology, weights=weights, biases=biases, seed=seed, input_names=names)


def _kernel_args(net: BnnNetwork):
    (s1, d1), (s2, d2), (s3, d3) = net.topology.edge_layout()
    w1, w2, w3 = net.weights
    b1, b2, b3 = net.biases
    return s1, d1, w1, b1, s2, d2, w2, b2, s3, d3, w3, b3


def forward_batch(net: BnnNetwork, X) -> np.ndarray:
    """Scores for a batch of input rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise ValueError(
            f"expected input width {net.n_inputs}, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    _validate_inputs(net, X)
    s1, d1, w1, b1, s2, d2, w2, b2, s3, d3, w3, b3 = _kernel_args(net)
    _, _, yhat = kernels.bnn_forward(
        X, net.topology.widths[1], net.topology.widths[2],
        s1, d1, w1, b1, s2, d2, w2, b2, s3, d3, w3, b3,
    )
    return yhat


def forward(net: BnnNetwork, x) -> float:
    """Score for a single input row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.n_inputs:
        raise ValueError(f"expected input of length {net.n_inputs}")
    return float(forward_batch(net, x.reshape(1, -1))[0])


def _validate_inputs(net: BnnNetwork, X: np.ndarray) -> None:
    if not np.isfinite(X).all():
        raise ValueError("inputs must be finite")
    adv = ~net.topology.is_context
    if adv.any():
        block = X[:, adv]
        if (block < 0).any() or (block > 1).any():
            raise ValueError("advisor inputs must lie in [0, 1]")


def cross_entropy(yhat, y) -> float:
    """Mean cross-entropy with log arguments clamped away from 0."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    clip = kernels.PROB_CLIP
    p = np.maximum(yhat, clip)
    q = np.maximum(1.0 - yhat, clip)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(q))))


def train(
    net: BnnNetwork, features, labels, hp: TrainHyperparams
) -> tuple[BnnNetwork, list[EpochStats]]:
    """Mini-batch gradient descent with momentum on mean cross-entropy.

    Trains ``net`` in place and returns it with the per-epoch history.
    Gradients exist only for unpruned edges, so masked weights stay zero
    throughout. Deterministic for a fixed seed: the validation split and
    every epoch's batch order come from one seeded generator. The recorded
    ``seconds`` cover the weight-update pass only, not the validation
    evaluation, so histories are comparable across topologies.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training set must contain at least one row")
    if X.shape[1] != net.n_inputs:
        raise ValueError(f"expected input width {net.n_inputs}, got {X.shape[1]}")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be a vector matching the feature rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")

    rng = np.random.default_rng(hp.seed)
    order = rng.permutation(X.shape[0])
    n_val = int(math.floor(X.shape[0] * hp.validation_fraction))
    if n_val > 0 and X.shape[0] - n_val >= 1:
        val_idx, train_idx = order[:n_val], order[n_val:]
    else:
        val_idx, train_idx = order[:0], order
    Xtr = np.ascontiguousarray(X[train_idx])
    ytr = np.ascontiguousarray(y[train_idx])
    Xval = np.ascontiguousarray(X[val_idx])
    yval = np.ascontiguousarray(y[val_idx])

    vels_w = [np.zeros_like(w) for w in net.weights]
    vels_b = [np.zeros_like(b) for b in net.biases]
    s1, d1, w1, b1, s2, d2, w2, b2, s3, d3, w3, b3 = _kernel_args(net)
    history: list[EpochStats] = []
    best_val = math.inf
    stale = 0
    n_train = len(train_idx)
    for epoch in range(1, hp.epochs + 1):
        perm = rng.permutation(n_train)
        t0 = time.perf_counter()
        loss_sum, n_correct = kernels.bnn_train_epoch(
            Xtr, ytr, perm, hp.batch_size, hp.learning_rate, hp.momentum,
            s1, d1, w1, b1, vels_w[0], vels_b[0],
            s2, d2, w2, b2, vels_w[1], vels_b[1],
            s3, d3, w3, b3, vels_w[2], vels_b[2],
        )
        seconds = time.perf_counter() - t0
        train_loss = loss_sum / n_train
        train_acc = n_correct / n_train
        blew_up = not math.isfinite(train_loss) or any(
            not np.isfinite(w).all() for w in net.weights
        )
        if blew_up:
            raise TrainingDivergedError(
                f"training diverged at epoch {epoch} "
                f"(learning_rate={hp.learning_rate}); reduce the step size"
            )
        if len(val_idx):
            yv = forward_batch(net, Xval)
            val_loss = cross_entropy(yv, yval)
            val_acc = float(np.mean((yv >= 0.5) == (yval >= 0.5)))
        else:
            val_loss = math.nan
            val_acc = math.nan
        history.append(
            EpochStats(epoch, train_loss, val_loss, train_acc, val_acc, seconds)
        )
        if hp.patience is not None and len(val_idx):
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= hp.patience:
                    break
    net.hyperparams = hp
    return net, history


def gradients(net: BnnNetwork, features, labels):
    """Backprop gradients of the mean cross-entropy over one full batch.

    Extracted from the production update path: one full-batch step with
    momentum 0 and unit learning rate on a throwaway copy leaves exactly
    ``-gradient`` in the velocity buffers, so the returned values are
    bit-for-bit the gradients the trainer applies.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64)
    probe = net.copy()
    s1, d1, w1, b1, s2, d2, w2, b2, s3, d3, w3, b3 = _kernel_args(probe)
    vels_w = [np.zeros_like(w) for w in probe.weights]
    vels_b = [np.zeros_like(b) for b in probe.biases]
    perm = np.arange(X.shape[0])
    kernels.bnn_train_epoch(
        X, y, perm, X.shape[0], 1.0, 0.0,
        s1, d1, w1, b1, vels_w[0], vels_b[0],
        s2, d2, w2, b2, vels_w[1], vels_b[1],
        s3, d3, w3, b3, vels_w[2], vels_b[2],
    )
    return [-v for v in vels_w], [-v for v in vels_b]


def save_network(net: BnnNetwork, path: str | Path) -> None:
    """Store a network as JSON; floats round-trip exactly."""
    topo = net.topology
    doc = {
        "format": "cobra-bnn-v1",
        "widths": list(topo.widths),
        "input_entropies": topo.input_entropies.tolist(),
        "is_context": topo.is_context.astype(int).tolist(),
        "masks": [m.astype(int).tolist() for m in topo.masks],
        "node_h": [h.tolist() for h in topo.node_h],
        "dense": topo.dense,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "activations": list(net.activations),
        "seed": net.seed,
        "input_names": list(net.input_names) if net.input_names else None,
        "hyperparams": net.hyperparams.__dict__.copy() if net.hyperparams else None,
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path: str | Path) -> BnnNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict) or doc.get("format") != "cobra-bnn-v1":
        raise NetworkFormatError(f"{path}: unknown network format")
    try:
        widths = tuple(doc["widths"])
        topo = BnnTopology(
            widths=widths,
            input_entropies=np.asarray(doc["input_entropies"], dtype=np.float64),
            is_context=np.asarray(doc["is_context"], dtype=bool),
            masks=tuple(np.asarray(m, dtype=bool) for m in doc["masks"]),
            node_h=tuple(np.asarray(h, dtype=np.float64) for h in doc["node_h"]),
            dense=bool(doc["dense"]),
        )
        hp = doc["hyperparams"]
        names = doc["input_names"]
        net = BnnNetwork(
            topology=topo,
            weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
            seed=int(doc["seed"]),
            activations=tuple(doc["activations"]),
            input_names=tuple(names) if names else None,
            hyperparams=TrainHyperparams(**hp) if hp else None,
        )
    except (KeyError, TypeError) as exc:
        raise NetworkFormatError(f"{path}: missing or malformed field ({exc})")
    for t, ((src, dptr), w) in enumerate(zip(net.topology.edge_layout(), net.weights)):
        if len(src) != len(w):
            raise NetworkFormatError(
                f"{path}: transition {t} has {len(src)} edges but {len(w)} weights"
            )
    return net


def write_history(history: Sequence[EpochStats], path: str | Path) -> None:
    """Per-epoch training history as delimited text."""
    with Path(path).open("w") as fh:
        fh.write("epoch,train_loss,val_loss,train_acc,val_acc,seconds\n")
        for h in history:
            fh.write(
                f"{h.epoch},{h.train_loss!r},{h.val_loss!r},"
                f"{h.train_acc!r},{h.val_acc!r},{h.seconds!r}\n"
            )
