"""Graph Koopman autoencoder for centralized, network-wide SINR prediction.

Flow for a p-step prediction::

    G(t) --GNN + mean pool--> g(t) --KAE enc--> h(t) --K^p--> h(t+p)
         --KAE dec--> g(t+p) --graph decoder--> S(t+p)

The graph decoder maps the pooled embedding straight to the full L x (L-1)
feature matrix, so a trained model is tied to the fleet size it saw.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import isolated_rows
from .graph import GraphSnapshot
from .koopman import (KaeModel, Normalizer, TrainingConfig, fit_minibatch, sliding_windows,
                      train_length)
from .nn import Mlp, activate, activation_grad, glorot


@dataclass
class GnnLayer:
    """H' = act(P H W^T + b), with P a row-stochastic propagation matrix."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "tanh"

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int,
             activation: str = "tanh") -> GnnLayer:
        return cls(glorot(rng, n_out, n_in), np.zeros(n_out), activation)

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def forward(self, prop: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``prop`` (B, L, L), ``h`` (B, L, in) -> output (B, L, out) and the aggregate P H."""
        agg = prop @ h
        return activate(agg @ self.weight.T + self.bias, self.activation), agg

    def backward(self, prop: np.ndarray, agg: np.ndarray, out: np.ndarray,
                 grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        gz = activation_grad(out, grad_out, self.activation)
        flat_gz = gz.reshape(-1, gz.shape[-1])
        g_w = flat_gz.T @ agg.reshape(-1, agg.shape[-1])
        g_b = flat_gz.sum(axis=0)
        g_h = np.swapaxes(prop, -1, -2) @ (gz @ self.weight)
        return [g_w, g_b], g_h


def propagation_matrix(adjacency: np.ndarray, weights: np.ndarray, mode: str = "distance",
                       scale: float = 100.0) -> np.ndarray:
    """Row-stochastic aggregation weights with unit self-loops.

    In ``distance`` mode an edge of length d gets affinity 1 / (1 + d/scale);
    in ``binary`` mode every edge gets 1. Works on stacked (..., L, L) inputs.
    """
    adj = np.asarray(adjacency, dtype=bool)
    if mode == "distance":
        aff = np.where(adj, 1.0 / (1.0 + np.asarray(weights, dtype=float) / scale), 0.0)
    elif mode == "binary":
        aff = adj.astype(float)
    else:
        raise ValueError(f"unknown adjacency mode {mode!r}")
    aff = aff + np.eye(adj.shape[-1])
    return aff / aff.sum(axis=-1, keepdims=True)


def mean_pool(h: np.ndarray) -> np.ndarray:
    return h.mean(axis=-2)


@dataclass
class GkaeModel:
    gnn: list[GnnLayer]
    kae: KaeModel
    graph_decoder: Mlp
    n_nodes: int
    normalizer: Normalizer | None = None
    adjacency: str = "distance"
    affinity_scale: float = 100.0
    node_identity: bool = False
    initial_loss: float = math.nan
    final_loss: float = math.nan
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        feat = self.n_nodes - 1 + (self.n_nodes if self.node_identity else 0)
        if self.gnn[0].n_in != feat:
            raise ValueError(f"first GNN layer expects {self.gnn[0].n_in} features per node, "
                             f"fleet of {self.n_nodes} gives {feat}")
        if self.kae.input_dim != self.gnn[-1].n_out:
            raise ValueError("KAE input dimension differs from the graph embedding dimension")
        if self.graph_decoder.n_out != self.n_nodes * (self.n_nodes - 1):
            raise ValueError("graph decoder output does not match L * (L - 1)")

    @classmethod
    def init(cls, n_nodes: int, config: TrainingConfig, rng: np.random.Generator) -> GkaeModel:
        if n_nodes < 2:
            raise ValueError("need at least two nodes")
        b = config.embedding_dim
        n_in = n_nodes - 1 + (n_nodes if config.node_identity else 0)
        gnn = [GnnLayer.init(rng, n_in, b), GnnLayer.init(rng, b, b)]
        kae = KaeModel.init(b, config, rng)
        decoder = Mlp.init([b, config.decoder_width, n_nodes * (n_nodes - 1)], rng)
        return cls(gnn, kae, decoder, n_nodes, None, config.adjacency, config.affinity_scale,
                   config.node_identity)

    @property
    def embedding_dim(self) -> int:
        return self.gnn[-1].n_out

    @property
    def layer_count(self) -> int:
        return len(self.gnn) + self.kae.layer_count + len(self.graph_decoder.layers)

    def parameters(self) -> list[np.ndarray]:
        gnn = [p for layer in self.gnn for p in layer.parameters()]
        return [*gnn, *self.kae.parameters(), *self.graph_decoder.parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def propagation(self, snapshot: GraphSnapshot) -> np.ndarray:
        return propagation_matrix(snapshot.adjacency, snapshot.weights,
                                  self.adjacency, self.affinity_scale)

    def _check(self, snapshot: GraphSnapshot):
        if snapshot.size != self.n_nodes:
            raise ValueError(f"model was built for {self.n_nodes} UAVs, "
                             f"snapshot has {snapshot.size}")

    def _normalize(self, features: np.ndarray) -> np.ndarray:
        if self.normalizer is None:
            return np.asarray(features, dtype=float)
        flat = np.asarray(features).reshape(features.shape[:-2] + (-1,))
        return self.normalizer.normalize(flat).reshape(features.shape)

    def _denormalize(self, flat: np.ndarray) -> np.ndarray:
        out = flat if self.normalizer is None else self.normalizer.denormalize(flat)
        return out.reshape(flat.shape[:-1] + (self.n_nodes, self.n_nodes - 1))

    def node_inputs(self, x: np.ndarray) -> np.ndarray:
        """Node feature rows, with a one-hot node index appended when enabled."""
        if not self.node_identity:
            return x
        eye = np.broadcast_to(np.eye(self.n_nodes), x.shape[:-1] + (self.n_nodes,))
        return np.concatenate([x, eye], axis=-1)

    # -- normalized-space pieces
    def embed(self, prop: np.ndarray, x: np.ndarray) -> np.ndarray:
        h = self.node_inputs(x)
        for layer in self.gnn:
            h, _ = layer.forward(prop, h)
        return mean_pool(h)

    def latent_predictions(self, g: np.ndarray, steps: int) -> np.ndarray:
        """Normalized flat feature predictions for l = 0..steps."""
        path = self.kae.latent_path(self.kae.encoder(g), steps)
        return np.stack([self.graph_decoder(self.kae.decoder(h)) for h in path])

    # -- differentiable batch loss
    def batch_loss(self, prop: np.ndarray, windows: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean multi-step loss over a batch, with gradients for :meth:`parameters`.

        ``prop`` is (B, L, L) for each window's first step and ``windows`` is
        (B, horizon, L, L-1) of normalized features.
        """
        b, horizon = windows.shape[:2]
        h = self.node_inputs(windows[:, 0])
        gnn_cache = []
        for layer in self.gnn:
            out, agg = layer.forward(prop, h)
            gnn_cache.append((agg, out))
            h = out
        g0 = mean_pool(h)
        emb, kae_cache = self.kae.forward_sequence(g0, horizon)
        flat, dec_tape = self.graph_decoder.forward(emb.reshape(horizon * b, -1))
        target = windows.transpose(1, 0, 2, 3).reshape(horizon * b, -1)
        diff = flat - target
        loss = float(np.sum(diff * diff)) / b

        dec_grads, g_emb = self.graph_decoder.backward(dec_tape, 2.0 * diff / b)
        kae_grads, g_g0 = self.kae.backward_sequence(kae_cache, g_emb.reshape(emb.shape))
        g_h = np.repeat(g_g0[:, None, :] / self.n_nodes, self.n_nodes, axis=1)
        gnn_grads: list[list[np.ndarray]] = []
        for layer, (agg, out) in zip(reversed(self.gnn), reversed(gnn_cache)):
            grads, g_h = layer.backward(prop, agg, out, g_h)
            gnn_grads.append(grads)
        flat_gnn = [p for grads in reversed(gnn_grads) for p in grads]
        return loss, [*flat_gnn, *kae_grads, *dec_grads]


def encode_graph(model: GkaeModel, snapshot: GraphSnapshot) -> np.ndarray:
    model._check(snapshot)
    return model.embed(model.propagation(snapshot), model._normalize(snapshot.features))


def decode_graph(model: GkaeModel, g: np.ndarray) -> np.ndarray:
    """Linear-ratio L x (L-1) features decoded from a graph embedding."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != model.embedding_dim:
        raise ValueError(f"expected embedding of size {model.embedding_dim}, got {g.shape[-1]}")
    return np.maximum(model._denormalize(model.graph_decoder(g)), np.finfo(float).tiny)


def gkae_rollout(model: GkaeModel, snapshot: GraphSnapshot, steps: int) -> np.ndarray:
    """Predicted linear-ratio features for t+1..t+steps, shape (steps, L, L-1)."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    g = encode_graph(model, snapshot)
    if steps == 0:
        return np.empty((0, model.n_nodes, model.n_nodes - 1))
    path = model.kae.latent_path(model.kae.encoder(g), steps)[1:]
    return np.stack([decode_graph(model, model.kae.decoder(h)) for h in path])


@dataclass
class CentralizedPrediction:
    features: np.ndarray
    isolated: np.ndarray
    network: np.ndarray


def predict_centralized(model: GkaeModel, snapshot: GraphSnapshot, steps: int,
                        kappa: float) -> CentralizedPrediction:
    feats = gkae_rollout(model, snapshot, steps)
    iso = isolated_rows(feats, kappa)
    return CentralizedPrediction(feats, iso, iso.any(axis=-1))


def stack_snapshots(snapshots: list[GraphSnapshot]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sizes = {s.size for s in snapshots}
    if len(sizes) != 1:
        raise ValueError(f"snapshots disagree on the number of UAVs: {sorted(sizes)}")
    return (np.stack([s.features for s in snapshots]),
            np.stack([s.adjacency for s in snapshots]),
            np.stack([s.weights for s in snapshots]))


def train_gkae(snapshots: list[GraphSnapshot], config: TrainingConfig | None = None,
               seed: int = 0, label: str = "gkae") -> GkaeModel:
    """Fit a GKAE end to end on the leading training split of ``snapshots``."""
    config = config or TrainingConfig()
    features, adjacency, weights = stack_snapshots(snapshots)
    n_nodes = features.shape[1]
    n_train = train_length(features.shape[0], config.train_fraction)
    if n_train < config.horizon + 1:
        raise ValueError(f"training split of {n_train} snapshots is too short "
                         f"for horizon {config.horizon}")
    rng = np.random.default_rng(seed)
    model = GkaeModel.init(n_nodes, config, rng)
    model.normalizer = Normalizer.fit(features[:n_train].reshape(n_train, -1))
    norm = model._normalize(features[:n_train])
    windows = sliding_windows(norm, config.horizon)
    prop = propagation_matrix(adjacency[:windows.shape[0]], weights[:windows.shape[0]],
                              config.adjacency, config.affinity_scale)
    # the end-to-end graph model oscillates at the per-UAV rate on some fleets
    schedule = dataclasses.replace(config, learning_rate=config.graph_learning_rate)
    initial, final, history = fit_minibatch(
        model.parameters(), lambda idx: model.batch_loss(prop[idx], windows[idx]),
        windows.shape[0], schedule, rng, label)
    model.initial_loss, model.final_loss, model.loss_history = initial, final, history
    return model
