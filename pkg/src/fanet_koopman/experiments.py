"""Dataset generation, training orchestration, evaluation and sweeps."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import isolated_rows
from .config import ExperimentConfig
from .dynamics import sample_fleet, simulate_fleet
from .gkae import GkaeModel, propagation_matrix, train_gkae
from .graph import GraphSnapshot, build_series
from .koopman import KaeModel, TrainingConfig, predict_distributed, train_kae, train_length
from .metrics import ConfusionCounts, EvalReport, classify_events, step_errors
from .storage import Dataset

log = logging.getLogger(__name__)

THREADS_ENV = "FANET_KOOPMAN_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def parallel_map(fn, items: list, workers: int | None = None) -> list:
    """Order-preserving map; runs in a process pool when more than one worker."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ---------------------------------------------------------------- simulation

def build_dataset(config: ExperimentConfig) -> Dataset:
    scenario = sample_fleet(config.scenario.sampling(), config.scenario.seed)
    states = simulate_fleet(scenario, config.scenario.steps)
    snapshots = build_series(states[:, :, :2], config.channel.params())
    return Dataset(config, states,
                   np.stack([s.features for s in snapshots]),
                   np.stack([s.adjacency for s in snapshots]),
                   np.stack([s.weights for s in snapshots]),
                   config.dataset_hash())


def dataset_snapshots(dataset: Dataset) -> list[GraphSnapshot]:
    return [GraphSnapshot(dataset.features[t], dataset.adjacency[t], dataset.weights[t], t)
            for t in range(dataset.features.shape[0])]


# ------------------------------------------------------------------ training

def _train_one_kae(args) -> KaeModel:
    series, config, seed, label = args
    return train_kae(series, config, seed, label)


def train_distributed(dataset: Dataset, config: TrainingConfig, seed: int,
                      workers: int | None = None) -> list[KaeModel]:
    """One KAE per UAV, each fit only on that UAV's received-SINR row."""
    jobs = [(dataset.features[:, l, :], config, derive_seed(seed, l + 1), f"kae-uav{l + 1}")
            for l in range(dataset.n_uavs)]
    return parallel_map(_train_one_kae, jobs, workers)


def train_centralized(dataset: Dataset, config: TrainingConfig, seed: int) -> GkaeModel:
    return train_gkae(dataset_snapshots(dataset), config, derive_seed(seed, 0), "gkae")


# ---------------------------------------------------------------- prediction

class Predictor:
    """Batch predictor: ``predict(starts, steps)`` -> (n_starts, steps, L, L-1) linear SINR."""

    mode = "abstract"

    def predict(self, starts: np.ndarray, steps: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class DistributedPredictor(Predictor):
    models: list[KaeModel]
    features: np.ndarray
    mode = "distributed"

    def predict(self, starts, steps):
        starts = np.asarray(starts)
        out = np.empty((starts.size, steps) + self.features.shape[1:])
        for l, model in enumerate(self.models):
            pred = predict_distributed(model, self.features[starts, l, :], steps)
            out[:, :, l, :] = np.swapaxes(pred, 0, 1)
        return out


@dataclass
class CentralizedPredictor(Predictor):
    model: GkaeModel
    features: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray
    mode = "centralized"

    def predict(self, starts, steps):
        starts = np.asarray(starts)
        m = self.model
        prop = propagation_matrix(self.adjacency[starts], self.weights[starts],
                                  m.adjacency, m.affinity_scale)
        g = m.embed(prop, m._normalize(self.features[starts]))
        flat = m.latent_predictions(g, steps)[1:]
        feats = np.maximum(m._denormalize(flat), np.finfo(float).tiny)
        return np.swapaxes(feats, 0, 1)


@dataclass
class GroundTruthPredictor(Predictor):
    """Replays the true future; evaluation sanity fixture."""

    features: np.ndarray
    mode: str = "oracle"

    def predict(self, starts, steps):
        idx = np.asarray(starts)[:, None] + np.arange(1, steps + 1)[None, :]
        return self.features[idx]


# ---------------------------------------------------------------- evaluation

def held_out_starts(n_samples: int, train_fraction: float, steps: int) -> np.ndarray:
    """Start indices t in the held-out tail with t + steps still inside the series."""
    first = train_length(n_samples, train_fraction)
    last = n_samples - 1 - steps
    if last < first:
        raise ValueError(f"held-out region from {first} cannot fit {steps}-step predictions "
                         f"in {n_samples} samples")
    return np.arange(first, last + 1)


@dataclass
class StartResult:
    start: int
    epsilon: float
    network: ConfusionCounts
    per_uav: list[ConfusionCounts]


@dataclass
class SweepResult:
    """Evaluation of one (horizon, threshold) point over every start index."""

    mode: str
    horizon: int
    point_kind: str
    point_value: float
    kappa: float
    starts: list[StartResult] = field(default_factory=list)
    step_error: np.ndarray | None = None

    def report(self) -> EvalReport:
        net = sum((s.network for s in self.starts), ConfusionCounts())
        n = len(self.starts[0].per_uav) if self.starts else 0
        per = [sum((s.per_uav[l] for s in self.starts), ConfusionCounts()) for l in range(n)]
        eps = float(np.mean([s.epsilon for s in self.starts])) if self.starts else float("nan")
        return EvalReport(eps, net, self.horizon, self.mode, self.kappa, per)


def evaluate(predictor: Predictor, features: np.ndarray, starts: np.ndarray, steps: int,
             points: list[tuple[str, float, float]], domain: str = "db") -> list[SweepResult]:
    """Predict ``steps`` ahead from every start and score each threshold point."""
    starts = np.asarray(starts)
    pred = predictor.predict(starts, steps)
    idx = starts[:, None] + np.arange(1, steps + 1)[None, :]
    truth = features[idx]
    errors = np.stack([step_errors(truth[k], pred[k], domain) for k in range(starts.size)])
    eps = errors.mean(axis=1)
    results = []
    for kind, value, kappa in points:
        actual = isolated_rows(truth, kappa)
        guess = isolated_rows(pred, kappa)
        res = SweepResult(predictor.mode, steps, kind, value, kappa,
                          step_error=errors.mean(axis=0))
        for k, t in enumerate(starts):
            network = classify_events(actual[k].any(axis=-1), guess[k].any(axis=-1))
            per = [classify_events(actual[k, :, l], guess[k, :, l])
                   for l in range(actual.shape[-1])]
            res.starts.append(StartResult(int(t), float(eps[k]), network, per))
        results.append(res)
    return results


def evaluate_all(predictor: Predictor, dataset: Dataset, config: ExperimentConfig) -> list[SweepResult]:
    points = config.evaluation.sweep_points(config.channel.params())
    out = []
    for steps in config.evaluation.horizons:
        starts = held_out_starts(dataset.features.shape[0], config.training.train_fraction, steps)
        out += evaluate(predictor, dataset.features, starts, steps, points,
                        config.evaluation.error_domain)
    return out


# ---------------------------------------------------------------- isolation sweep

@dataclass
class IsolationCount:
    point_kind: str
    point_value: float
    kappa: float
    network: int
    per_uav: list[int]


def count_isolation(features: np.ndarray, points) -> list[IsolationCount]:
    """Ground-truth isolation-event counts over a whole run for each threshold point."""
    out = []
    for kind, value, kappa in points:
        iso = isolated_rows(features, kappa)
        out.append(IsolationCount(kind, value, kappa, int(iso.any(axis=-1).sum()),
                                  [int(v) for v in iso.sum(axis=0)]))
    return out


# ---------------------------------------------------------------- multi-seed

@dataclass
class SeedComparison:
    seed: int
    centralized: list[SweepResult]
    distributed: list[SweepResult]
    parameters_centralized: int
    parameters_distributed: int
    loss_ratios: dict[str, float]


def compare_modes(config: ExperimentConfig, seed: int) -> SeedComparison:
    """Simulate, train both approaches and evaluate them on one scenario seed."""
    cfg = replace(config, scenario=replace(config.scenario, seed=seed))
    dataset = build_dataset(cfg)
    kaes = train_distributed(dataset, cfg.training, seed, workers=1)
    gkae = train_centralized(dataset, cfg.training, seed)
    central = evaluate_all(CentralizedPredictor(gkae, dataset.features, dataset.adjacency,
                                                dataset.weights), dataset, cfg)
    dist = evaluate_all(DistributedPredictor(kaes, dataset.features), dataset, cfg)
    ratios = {"gkae": gkae.final_loss / gkae.initial_loss}
    ratios.update({f"kae-uav{l + 1}": m.final_loss / m.initial_loss for l, m in enumerate(kaes)})
    return SeedComparison(seed, central, dist, gkae.parameter_count(),
                          kaes[0].parameter_count(), ratios)
