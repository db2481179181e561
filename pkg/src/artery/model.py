"""Attention networks predicting travel-time distributions on a corridor.

Three networks share one container: an imputation net fills the masked
arterial detector counts of a static graph, and two regression nets of
identical architecture map a dynamic graph to the (east, west) mean and
standard deviation of the travel-time distribution.  All layers run on
the tape autodiff in :mod:`artery.tensor`; no array framework is used.

The regression nets emit raw values in a standardized space and carry
an affine output scale that maps them back to seconds, so a checkpoint
is self-contained: load it and `predict` returns calibrated values
without the training-split statistics at hand.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .graphs import (
    D_DYNAMIC,
    D_EDGE,
    EAST,
    MASKED_COLS,
    SIGMA_FLOOR,
    WEST,
    DynamicGraph,
    StaticGraph,
    apply_mask,
    discretize_pdf,
    merge_imputations,
    refresh_dynamic,
)
from .tensor import (
    add_rowvec,
    concat,
    constant,
    exp,
    gather_rows,
    leaky_relu,
    matmul,
    no_grad,
    parameter,
    relu,
    scale_rows,
    scatter_add_rows,
    softplus,
    tmean,
)

log = logging.getLogger(__name__)

MODEL_SCHEMA = "artery-model/1"

D_STATIC = 8          # one detector count per signal phase
NODE_HIDDEN_X = 32    # imputation net embedding width
NODE_HIDDEN = 64      # regression net embedding width
EDGE_HIDDEN = 64      # edge autoencoder hidden width
HEAD_HIDDEN = 64      # output head hidden width
ATTENTION_HEADS = 4   # first layer; the second layer always uses 1

# Fixed input divisors keep first-layer activations O(1): counts arrive
# in vehicles per window, cycles in seconds, distances in meters, driver
# fields in small SI units; ratio columns pass through untouched.  Plain
# constants, not parameters; feature files keep their physical units.
COUNT_SCALE = 100.0
XP_DIVISOR = np.array([240.0, 1.0, 1.0, 1.0, 1.0, 1.0] + [COUNT_SCALE] * 8)
EDGE_DIVISOR = np.array([500.0] + [1.0] * 12 + [5.0] * 5 + [1.0])


def _glorot(rng, fan_in, fan_out, shape):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _scaled(arr, divisor, what):
    if arr.shape[1] != divisor.shape[0]:
        raise ShapeError(f"{what}: expected {divisor.shape[0]} features, got {arr.shape[1]}")
    return constant(arr / divisor)


class Dense:
    """Affine layer y = x W + b with zero-initialized bias."""

    def __init__(self, in_dim, out_dim, rng, name, zero_init=False):
        if zero_init:
            w0 = np.zeros((in_dim, out_dim))
        else:
            w0 = _glorot(rng, in_dim, out_dim, (in_dim, out_dim))
        self.w = parameter(w0, name=f"{name}.w")
        self.b = parameter(np.zeros((1, out_dim)), name=f"{name}.b")

    def __call__(self, x):
        return add_rowvec(matmul(x, self.w), self.b)

    def params(self):
        return {self.w.name: self.w, self.b.name: self.b}


def _segment_softmax(logits, index, num_groups):
    """Softmax of an (m x 1) logit column within groups given by index.

    The per-group maximum is subtracted as a constant before
    exponentiation; the shift cancels in the ratio, so gradients are
    exact while large logits cannot overflow.
    """
    vals = logits.values[:, 0]
    peak = np.full(num_groups, -np.inf)
    np.maximum.at(peak, index, vals)
    shifted = logits - constant(peak[index].reshape(-1, 1))
    weights = exp(shifted)
    denom = scatter_add_rows(weights, index, num_groups)
    return weights / gather_rows(denom, index)


class GatLayer:
    """Multi-head graph attention over a fixed directed edge list.

    Per head, nodes are projected by a learned weight and each edge
    (s, d) is scored by leaky-relu of a learned linear function of the
    source embedding, the target embedding, and (when the layer is
    built with an edge width) an embedding of the edge's feature row.
    Scores are softmax-normalized over each destination's
    in-neighborhood, which always includes an internally appended
    self-loop, and the weighted source embeddings are summed.  Head
    outputs are concatenated, a shared bias is added, and the result
    passes through relu.
    """

    def __init__(self, in_dim, out_dim, heads, rng, name, edge_dim=None):
        if out_dim % heads:
            raise ConfigError(f"{name}: {heads} heads do not divide width {out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.head_dim = out_dim // heads
        self.edge_dim = edge_dim
        self.name = name
        hd = self.head_dim
        self._heads = []
        for i in range(heads):
            head = {
                "w": parameter(
                    _glorot(rng, in_dim, hd, (in_dim, hd)), name=f"{name}.h{i}.w"
                ),
                "a_src": parameter(_glorot(rng, hd, 1, (hd, 1)), name=f"{name}.h{i}.a_src"),
                "a_dst": parameter(_glorot(rng, hd, 1, (hd, 1)), name=f"{name}.h{i}.a_dst"),
            }
            if edge_dim is not None:
                head["w_e"] = parameter(
                    _glorot(rng, edge_dim, hd, (edge_dim, hd)), name=f"{name}.h{i}.w_e"
                )
                head["a_e"] = parameter(_glorot(rng, hd, 1, (hd, 1)), name=f"{name}.h{i}.a_e")
            self._heads.append(head)
        self.bias = parameter(np.zeros((1, out_dim)), name=f"{name}.bias")

    def __call__(self, x, edge_src, edge_dst, edge_feat=None):
        n = x.values.shape[0]
        if x.values.shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected {self.in_dim} node features, got {x.values.shape[1]}"
            )
        if (edge_feat is None) != (self.edge_dim is None):
            raise ConfigError(
                f"{self.name}: edge features "
                + ("missing" if edge_feat is None else "given to an edge-free layer")
            )
        if edge_feat is not None and edge_feat.values.shape[1] != self.edge_dim:
            raise ShapeError(
                f"{self.name}: expected {self.edge_dim} edge features, "
                f"got {edge_feat.values.shape[1]}"
            )
        src, dst = self._check_edges(edge_src, edge_dst, n)
        loops = np.arange(n)
        src_all = np.concatenate([src, loops])
        dst_all = np.concatenate([dst, loops])

        outs = []
        for head in self._heads:
            h, alpha = self._attend(head, x, src, dst, dst_all, edge_feat)
            messages = scale_rows(gather_rows(h, src_all), alpha)
            outs.append(scatter_add_rows(messages, dst_all, n))
        merged = outs[0] if len(outs) == 1 else concat(outs, axis=1)
        return relu(add_rowvec(merged, self.bias))

    def _check_edges(self, edge_src, edge_dst, n):
        src = np.asarray(edge_src, dtype=np.int64)
        dst = np.asarray(edge_dst, dtype=np.int64)
        if src.size and (src.min() < 0 or src.max() >= n or dst.min() < 0 or dst.max() >= n):
            raise ShapeError(f"{self.name}: edge index out of range for {n} nodes")
        return src, dst

    def _attend(self, head, x, src, dst, dst_all, edge_feat):
        h = matmul(x, head["w"])
        s_src = matmul(h, head["a_src"])
        s_dst = matmul(h, head["a_dst"])
        raw = gather_rows(s_src, src) + gather_rows(s_dst, dst)
        if edge_feat is not None:
            raw = raw + matmul(matmul(edge_feat, head["w_e"]), head["a_e"])
        # Internal self-loops carry no edge term.
        logits = leaky_relu(concat([raw, s_src + s_dst]))
        return h, _segment_softmax(logits, dst_all, x.values.shape[0])

    def attention_weights(self, x, edge_src, edge_dst, edge_feat=None):
        """Per-head softmax weights and the (src, dst) pairs they cover.

        The trailing n entries are the internal self-loops.  Pure
        recomputation, no tape involvement.
        """
        n = x.values.shape[0]
        src, dst = self._check_edges(edge_src, edge_dst, n)
        loops = np.arange(n)
        src_all = np.concatenate([src, loops])
        dst_all = np.concatenate([dst, loops])
        with no_grad():
            weights = [
                self._attend(head, x, src, dst, dst_all, edge_feat)[1].values[:, 0]
                for head in self._heads
            ]
        return weights, src_all, dst_all

    def params(self):
        out = {}
        for head in self._heads:
            for p in head.values():
                out[p.name] = p
        out[self.bias.name] = self.bias
        return out


class EdgeMlp:
    """Per-edge autoencoder: d_e -> hidden with relu -> d_e decoded.

    Returns both the decoded features (same width as the input, fed to
    the second attention layer) and the hidden encodings (pooled later
    by direction for the fusion vector).
    """

    def __init__(self, rng, name, edge_dim=D_EDGE, hidden=EDGE_HIDDEN):
        self.enc = Dense(edge_dim, hidden, rng, f"{name}.enc")
        self.dec = Dense(hidden, edge_dim, rng, f"{name}.dec")

    def __call__(self, e):
        hidden = relu(self.enc(e))
        return self.dec(hidden), hidden

    def params(self):
        return {**self.enc.params(), **self.dec.params()}


def fuse_embeddings(edge_hidden, node_embeddings, edge_dir):
    """Direction-averaged edge encodings joined with pooled node rows.

    Output row: mean of eastbound edge encodings, then mean of
    westbound ones, then the mean over all node embeddings.
    """
    edge_dir = np.asarray(edge_dir)
    parts = []
    for direction in (EAST, WEST):
        idx = np.flatnonzero(edge_dir == direction)
        if idx.size == 0:
            raise ShapeError(f"no edges in direction {direction}")
        parts.append(tmean(gather_rows(edge_hidden, idx), axis=0, keepdims=True))
    parts.append(tmean(node_embeddings, axis=0, keepdims=True))
    return concat(parts, axis=1)


class ImputationNet:
    """Fills the masked arterial-phase counts of a static graph.

    The mask is applied internally, so a forward pass never sees the
    supervision values.  The output head starts at zero: an untrained
    net imputes exactly zero for every masked cell.  Output stays
    nonnegative through the final relu.
    """

    def __init__(self, rng, name="m_x"):
        self.name = name
        self.gat1 = GatLayer(
            D_STATIC, NODE_HIDDEN_X, ATTENTION_HEADS, rng, f"{name}.gat1", edge_dim=D_EDGE
        )
        self.gat2 = GatLayer(
            NODE_HIDDEN_X, NODE_HIDDEN_X, 1, rng, f"{name}.gat2", edge_dim=D_EDGE
        )
        # K x 4 head: one output per masked phase per node.  The east and
        # west intervening volumes are its phase-2 and phase-6 columns.
        self.head = Dense(NODE_HIDDEN_X, len(MASKED_COLS), rng, f"{name}.head", zero_init=True)

    def __call__(self, graph: StaticGraph):
        x = constant(apply_mask(graph.x, graph.mask) / COUNT_SCALE)
        e = _scaled(graph.e, EDGE_DIVISOR, f"{self.name} edge features")
        h = self.gat1(x, graph.edge_src, graph.edge_dst, e)
        h = self.gat2(h, graph.edge_src, graph.edge_dst, e)
        # Outputs live in count units even though activations are O(1).
        return relu(self.head(h)) * COUNT_SCALE

    def params(self):
        return {**self.gat1.params(), **self.gat2.params(), **self.head.params()}


@dataclass
class OutputScale:
    """Affine map from a net's standardized outputs back to seconds."""

    mean_e: float = 0.0
    std_e: float = 1.0
    mean_w: float = 0.0
    std_w: float = 1.0

    def __post_init__(self):
        if self.std_e <= 0.0 or self.std_w <= 0.0:
            raise ConfigError(f"output scale stds must be positive, got {self}")

    def mean_row(self):
        return np.array([[self.mean_e, self.mean_w]])

    def std_row(self):
        return np.array([[self.std_e, self.std_w]])


class RegressionNet:
    """Maps one dynamic graph to an (east, west) travel-time statistic.

    The same architecture serves both the mean and the standard
    deviation; `kind` selects the final activation.  Raw outputs are
    destandardized by the attached scale, then the mean variant clamps
    at zero via relu while the deviation variant applies softplus plus
    the distribution floor so it can never reach an invalid sigma.
    """

    def __init__(self, rng, name, kind):
        if kind not in ("mean", "stdv"):
            raise ConfigError(f"unknown regression kind '{kind}'")
        self.name = name
        self.kind = kind
        self.gat1 = GatLayer(
            D_DYNAMIC, NODE_HIDDEN, ATTENTION_HEADS, rng, f"{name}.gat1", edge_dim=D_EDGE
        )
        self.edge_mlp = EdgeMlp(rng, f"{name}.edge")
        self.gat2 = GatLayer(NODE_HIDDEN, NODE_HIDDEN, 1, rng, f"{name}.gat2", edge_dim=D_EDGE)
        self.fc1 = Dense(3 * NODE_HIDDEN, HEAD_HIDDEN, rng, f"{name}.fc1")
        self.fc2 = Dense(HEAD_HIDDEN, 2, rng, f"{name}.fc2")
        self.scale = OutputScale()

    def __call__(self, graph: DynamicGraph):
        xp = _scaled(graph.xp, XP_DIVISOR, f"{self.name} node features")
        ep = _scaled(graph.ep, EDGE_DIVISOR, f"{self.name} edge features")
        h = self.gat1(xp, graph.edge_src, graph.edge_dst, ep)
        decoded, hidden = self.edge_mlp(ep)
        h = self.gat2(h, graph.edge_src, graph.edge_dst, decoded)
        fused = fuse_embeddings(hidden, h, graph.edge_dir)
        raw = self.fc2(relu(self.fc1(fused)))
        seconds = raw * constant(self.scale.std_row()) + constant(self.scale.mean_row())
        if self.kind == "mean":
            return relu(seconds)
        return softplus(seconds) + SIGMA_FLOOR

    def params(self):
        return {
            **self.gat1.params(),
            **self.edge_mlp.params(),
            **self.gat2.params(),
            **self.fc1.params(),
            **self.fc2.params(),
        }


@dataclass
class Prediction:
    """Calibrated outputs for one record."""

    mu_e: float
    sigma_e: float
    mu_w: float
    sigma_w: float
    pdf_e: np.ndarray
    pdf_w: np.ndarray
    imputed: np.ndarray  # K x 4 predicted masked-phase counts


class FdgnnModel:
    """The three networks plus checkpoint plumbing."""

    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.seed = int(seed)
        self.m_x = ImputationNet(rng, "m_x")
        self.m_mu = RegressionNet(rng, "m_mu", kind="mean")
        self.m_sigma = RegressionNet(rng, "m_sigma", kind="stdv")
        log.info("model built: %d parameters", self.param_count)

    def params(self):
        return {**self.m_x.params(), **self.m_mu.params(), **self.m_sigma.params()}

    @property
    def param_count(self):
        return sum(p.values.size for p in self.params().values())

    def impute_counts(self, static: StaticGraph):
        """Full K x 8 count matrix with model-imputed masked cells."""
        imputed = self.m_x(static)
        merged = merge_imputations(apply_mask(static.x, static.mask), imputed.values)
        return merged, imputed

    def predict(self, record) -> Prediction:
        """End-to-end inference: impute, refresh, regress, discretize."""
        with no_grad():
            merged, imputed = self.impute_counts(record.static)
            refreshed = refresh_dynamic(record.dynamic, merged)
            mu = self.m_mu(refreshed).values[0]
            sg = self.m_sigma(refreshed).values[0]
        return Prediction(
            mu_e=float(mu[0]),
            sigma_e=float(sg[0]),
            mu_w=float(mu[1]),
            sigma_w=float(sg[1]),
            pdf_e=discretize_pdf(mu[0], sg[0]),
            pdf_w=discretize_pdf(mu[1], sg[1]),
            imputed=imputed.values.copy(),
        )


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _scale_dict(scale: OutputScale):
    return {
        "mean_e": scale.mean_e,
        "std_e": scale.std_e,
        "mean_w": scale.mean_w,
        "std_w": scale.std_w,
    }


def checkpoint_to_text(model: FdgnnModel, extra=None):
    """Serialize the model; `extra` rides along for trainer state."""
    doc = {
        "schema": MODEL_SCHEMA,
        "seed": model.seed,
        "params": {name: p.values.tolist() for name, p in model.params().items()},
        "scales": {
            "m_mu": _scale_dict(model.m_mu.scale),
            "m_sigma": _scale_dict(model.m_sigma.scale),
        },
        "extra": extra,
    }
    return _dumps(doc) + "\n"


def checkpoint_from_text(text):
    """Rebuild (model, extra) from checkpoint_to_text output."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise DataError(f"malformed checkpoint: {err}") from None
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise DataError(f"expected schema {MODEL_SCHEMA!r}, got {doc.get('schema')!r}")
    model = FdgnnModel(seed=doc.get("seed", 0))
    params = model.params()
    stored = doc.get("params", {})
    if set(stored) != set(params):
        missing = sorted(set(params) - set(stored))[:3]
        surplus = sorted(set(stored) - set(params))[:3]
        raise DataError(f"parameter names do not match: missing={missing} surplus={surplus}")
    for name, p in params.items():
        values = np.array(stored[name], dtype=np.float64)
        if values.shape != p.values.shape:
            raise DataError(
                f"parameter '{name}' has shape {values.shape}, expected {p.values.shape}"
            )
        p.values = values
    scales = doc.get("scales", {})
    for net_name, net in (("m_mu", model.m_mu), ("m_sigma", model.m_sigma)):
        if net_name not in scales:
            raise DataError(f"checkpoint missing output scale for {net_name}")
        net.scale = OutputScale(**scales[net_name])
    return model, doc.get("extra")


def write_checkpoint(model, path, extra=None):
    with open(path, "w") as fh:
        fh.write(checkpoint_to_text(model, extra=extra))


def read_checkpoint(path):
    with open(path) as fh:
        return checkpoint_from_text(fh.read())
