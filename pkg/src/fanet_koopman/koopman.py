"""Koopman autoencoders: DMD baseline, KAE model, multi-step loss and training.

A KAE maps a state x to a latent h = enc(x), advances it linearly with the
Koopman matrix (h -> K h) and maps back with dec. Predictions ``l`` steps ahead
are dec(K^l enc(x)), and training minimizes the squared error of those
predictions over a horizon of steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import linear_to_db
from .nn import DenseLayer, Mlp, OptimizerState, glorot, optimizer_step

log = logging.getLogger(__name__)

DB_FLOOR = 1e-12
STD_FLOOR = 1e-6


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    latent_dim: int = 16
    hidden_width: int = 64
    hidden_layers: int = 4
    horizon: int = 20
    learning_rate: float = 1e-2
    lr_floor: float = 0.01
    epochs: int = 400
    batch_size: int = 64
    train_fraction: float = 0.8
    # centralized model only
    embedding_dim: int = 32
    graph_learning_rate: float = 3e-3
    decoder_width: int = 64
    adjacency: str = "distance"
    affinity_scale: float = 100.0
    node_identity: bool = False

    def __post_init__(self):
        positive = ("latent_dim", "hidden_width", "horizon", "epochs", "batch_size",
                    "embedding_dim", "decoder_width")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        if not 0.0 < self.lr_floor <= 1.0:
            raise ValueError("lr_floor must lie in (0, 1]")
        if not (self.learning_rate > 0 and self.graph_learning_rate > 0):
            raise ValueError("learning rates must be positive")
        if self.adjacency not in ("distance", "binary"):
            raise ValueError("adjacency must be 'distance' or 'binary'")
        if not self.affinity_scale > 0:
            raise ValueError("affinity_scale must be positive")


def train_length(n_samples: int, fraction: float) -> int:
    """Number of leading samples in the training split."""
    return int(math.floor(fraction * n_samples))


# ---------------------------------------------------------------- normalization

@dataclass
class Normalizer:
    """dB transform (with a floor) followed by a per-feature z-score."""

    mean: np.ndarray
    std: np.ndarray
    floor: float = DB_FLOOR

    @classmethod
    def fit(cls, values: np.ndarray, std_floor: float = STD_FLOOR) -> Normalizer:
        db = linear_to_db(values, DB_FLOOR)
        mean = db.mean(axis=0)
        std = db.std(axis=0)
        flat = std < std_floor
        if np.any(flat):
            log.warning("%d feature(s) have near-zero variance; std floored at %g",
                        int(flat.sum()), std_floor)
            std = np.where(flat, std_floor, std)
        return cls(mean, std)

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.std <= STD_FLOOR))

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (linear_to_db(values, self.floor) - self.mean) / self.std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return 10.0 ** ((np.asarray(z) * self.std + self.mean) / 10.0)


# ------------------------------------------------------------------------- DMD

def dmd_fit(states) -> np.ndarray:
    """Least-squares one-step operator K minimizing sum ||z(t+1) - K z(t)||^2.

    Uses the pseudo-inverse (SVD-based lstsq), so rank-deficient data yield the
    minimum-norm K.
    """
    z = np.asarray(states, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"expected a (T+1, M) array of states, got shape {z.shape}")
    if z.shape[0] < 2:
        raise ValueError("need at least two states")
    past, future = z[:-1], z[1:]
    # past @ K.T = future
    kt, *_ = scipy.linalg.lstsq(past, future, lapack_driver="gelsd")
    return kt.T


# ------------------------------------------------------------------------ model

@dataclass
class KaeModel:
    encoder: Mlp
    koopman: DenseLayer
    decoder: Mlp
    normalizer: Normalizer | None = None
    horizon: int = 20
    initial_loss: float = math.nan
    final_loss: float = math.nan
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        m = self.koopman.weight.shape
        if m[0] != m[1]:
            raise ValueError(f"Koopman matrix must be square, got {m}")
        if self.encoder.n_out != m[0] or self.decoder.n_in != m[0]:
            raise ValueError("encoder/decoder do not chain through the latent dimension")

    @classmethod
    def init(cls, input_dim: int, config: TrainingConfig, rng: np.random.Generator,
             output_dim: int | None = None) -> KaeModel:
        out = input_dim if output_dim is None else output_dim
        widths = [config.hidden_width] * config.hidden_layers
        encoder = Mlp.init([input_dim, *widths, config.latent_dim], rng)
        koopman = DenseLayer(glorot(rng, config.latent_dim, config.latent_dim), None, "identity")
        decoder = Mlp.init([config.latent_dim, *widths, out], rng)
        return cls(encoder, koopman, decoder, None, config.horizon)

    @property
    def K(self) -> np.ndarray:
        return self.koopman.weight

    @property
    def input_dim(self) -> int:
        return self.encoder.n_in

    @property
    def latent_dim(self) -> int:
        return self.K.shape[0]

    @property
    def layer_count(self) -> int:
        return len(self.encoder.layers) + 1 + len(self.decoder.layers)

    def parameters(self) -> list[np.ndarray]:
        return [*self.encoder.parameters(), self.K, *self.decoder.parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def advance(self, h: np.ndarray, steps: int = 1) -> np.ndarray:
        for _ in range(steps):
            h = h @ self.K.T
        return h

    def latent_path(self, h0: np.ndarray, steps: int) -> np.ndarray:
        """Latent states K^l h0 for l = 0..steps, stacked on axis 0."""
        out = np.empty((steps + 1,) + np.shape(h0))
        out[0] = h0
        for l in range(1, steps + 1):
            out[l] = out[l - 1] @ self.K.T
        return out

    # -- raw (already normalized) space
    def predict_normalized(self, x0: np.ndarray, steps: int) -> np.ndarray:
        """dec(K^l enc(x0)) for l = 0..steps on normalized inputs; shape (steps+1, ...)."""
        path = self.latent_path(self.encoder(x0), steps)
        return np.stack([self.decoder(h) for h in path])

    # -- differentiable core used by the loss of both KAE and GKAE
    def forward_sequence(self, x0: np.ndarray, steps: int):
        """Outputs dec(K^l enc(x0)) for l = 0..steps-1, shape (steps, B, D), plus a cache."""
        h0, enc_tape = self.encoder.forward(x0)
        path = self.latent_path(h0, steps - 1)
        b = h0.shape[0]
        flat, dec_tape = self.decoder.forward(path.reshape(steps * b, -1))
        return flat.reshape(steps, b, -1), (enc_tape, dec_tape, path)

    def backward_sequence(self, cache, grad_out: np.ndarray):
        """Reverse pass of :meth:`forward_sequence`; returns (grads, grad wrt x0)."""
        enc_tape, dec_tape, path = cache
        steps, b = path.shape[:2]
        dec_grads, g_path = self.decoder.backward(dec_tape, grad_out.reshape(steps * b, -1))
        g_path = g_path.reshape(path.shape)
        g_k = np.zeros_like(self.K)
        g = g_path[steps - 1]
        for l in range(steps - 1, 0, -1):
            # path[l] = path[l-1] @ K.T
            g_k += g.T @ path[l - 1]
            g = g_path[l - 1] + g @ self.K
        enc_grads, g_x = self.encoder.backward(enc_tape, g)
        return [*enc_grads, g_k, *dec_grads], g_x


def rollout(model: KaeModel, x0: np.ndarray, steps: int) -> np.ndarray:
    """Denormalized predictions for l = 0..steps from the linear-ratio state ``x0``."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {x0.shape[-1]}")
    if model.normalizer is None:
        return model.predict_normalized(x0, steps)
    return model.normalizer.denormalize(
        model.predict_normalized(model.normalizer.normalize(x0), steps))


def window_loss(model: KaeModel, windows: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean over windows of the multi-step loss, with parameter gradients.

    ``windows`` has shape (B, horizon, D) in normalized space; element
    [b, l] is the target for the l-step prediction from [b, 0].
    """
    b, horizon, _ = windows.shape
    pred, cache = model.forward_sequence(windows[:, 0, :], horizon)
    diff = pred - windows.transpose(1, 0, 2)
    loss = float(np.sum(diff * diff)) / b
    grads, _ = model.backward_sequence(cache, 2.0 * diff / b)
    return loss, grads


def kae_loss(model: KaeModel, window: np.ndarray, horizon: int) -> float:
    """sum_{l < horizon} ||x(t+l) - dec(K^l enc(x(t)))||^2 in normalized space.

    ``window`` holds linear-ratio states x(t), x(t+1), ...; it is normalized
    with the model's normalizer when one is attached.
    """
    w = np.asarray(window, dtype=float)
    if w.shape[0] < horizon:
        raise ValueError(f"window of length {w.shape[0]} is shorter than horizon {horizon}")
    if model.normalizer is not None:
        w = model.normalizer.normalize(w)
    pred = model.predict_normalized(w[0], horizon - 1)
    return float(np.sum((pred - w[:horizon]) ** 2))


def sliding_windows(series: np.ndarray, horizon: int) -> np.ndarray:
    """All stride-1 windows of ``horizon`` consecutive rows: shape (N-horizon+1, horizon, ...)."""
    n = series.shape[0] - horizon + 1
    if n < 1:
        raise ValueError(f"series of length {series.shape[0]} is shorter than horizon {horizon}")
    idx = np.arange(n)[:, None] + np.arange(horizon)[None, :]
    return series[idx]


def fit_minibatch(parameters: list[np.ndarray], loss_fn, n_items: int, config: TrainingConfig,
                  rng: np.random.Generator, label: str = "model") -> tuple[float, float, list[float]]:
    """Generic Adam loop. ``loss_fn(indices)`` returns (loss, grads) for a batch.

    Returns (initial full-data loss, final full-data loss, per-epoch mean batch loss).
    """
    everything = np.arange(n_items)
    initial, _ = loss_fn(everything)
    state = OptimizerState.for_params(parameters, lr=config.learning_rate)
    history: list[float] = []
    for epoch in range(config.epochs):
        # cosine decay from learning_rate down to lr_floor * learning_rate
        decay = 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))
        state.lr = config.learning_rate * (config.lr_floor + (1.0 - config.lr_floor) * decay)
        order = rng.permutation(n_items)
        total, count = 0.0, 0
        for start in range(0, n_items, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            loss, grads = loss_fn(idx)
            if not math.isfinite(loss):
                raise TrainingDivergence(f"{label}: non-finite loss at epoch {epoch}")
            optimizer_step(parameters, grads, state)
            total += loss * idx.size
            count += idx.size
        history.append(total / count)
        log.debug("%s epoch %d loss %.6g", label, epoch, history[-1])
    final, _ = loss_fn(everything)
    if not math.isfinite(final):
        raise TrainingDivergence(f"{label}: non-finite final loss")
    return initial, final, history


def train_kae(series: np.ndarray, config: TrainingConfig | None = None, seed: int = 0,
              label: str = "kae") -> KaeModel:
    """Fit a KAE to a (T+1, D) linear-ratio series (one UAV's received SINR)."""
    config = config or TrainingConfig()
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError(f"series must be (T+1, D), got shape {series.shape}")
    n_train = train_length(series.shape[0], config.train_fraction)
    if n_train < config.horizon + 1:
        raise ValueError(f"training split of {n_train} samples is too short "
                         f"for horizon {config.horizon}")
    rng = np.random.default_rng(seed)
    model = KaeModel.init(series.shape[1], config, rng)
    model.normalizer = Normalizer.fit(series[:n_train])
    windows = sliding_windows(model.normalizer.normalize(series[:n_train]), config.horizon)
    initial, final, history = fit_minibatch(
        model.parameters(), lambda idx: window_loss(model, windows[idx]),
        windows.shape[0], config, rng, label)
    model.initial_loss, model.final_loss, model.loss_history = initial, final, history
    return model


def predict_distributed(model: KaeModel, current: np.ndarray, steps: int) -> np.ndarray:
    """Predicted linear-ratio SINR rows for t+1..t+steps from the row at t."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    current = np.asarray(current, dtype=float)
    if steps == 0:
        return np.empty((0,) + current.shape)
    pred = rollout(model, current, steps)[1:]
    return np.maximum(pred, np.finfo(float).tiny)
