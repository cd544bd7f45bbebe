"""On-disk formats: CSV datasets and logs, text checkpoints.

Floats are written with ``repr`` so every value round-trips exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .gkae import GkaeModel, GnnLayer
from .koopman import KaeModel, Normalizer
from .nn import DenseLayer, Mlp

CHECKPOINT_MAGIC = "fanet-koopman-checkpoint"
CHECKPOINT_VERSION = 1

TRAJECTORY_FILE = "trajectories.csv"
SINR_FILE = "sinr.csv"
GRAPH_FILE = "graph.csv"
DATASET_CONFIG = "dataset.cfg"


class DataError(RuntimeError):
    """Missing, malformed or mismatched data files."""


def fmt(x) -> str:
    return repr(float(x))


@dataclass
class Dataset:
    """states (T+1, L, 3); features (T+1, L, L-1); adjacency/weights (T+1, L, L)."""

    config: ExperimentConfig
    states: np.ndarray
    features: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray
    config_hash: str

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_uavs(self) -> int:
        return self.states.shape[1]


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            return header, list(reader)
    except (OSError, StopIteration) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def save_dataset(dataset: Dataset, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t_count, n = dataset.states.shape[:2]
    write_csv(out / TRAJECTORY_FILE, ["t", "uav", "x", "y", "psi"],
              ([t, l + 1, *map(fmt, dataset.states[t, l])]
               for t in range(t_count) for l in range(n)))
    write_csv(out / SINR_FILE, ["t", "receiver", "sender", "sinr"],
              ([t, i + 1, j + 1, fmt(dataset.features[t, i, j if j < i else j - 1])]
               for t in range(t_count) for i in range(n) for j in range(n) if i != j))
    write_csv(out / GRAPH_FILE, ["t", "receiver", "sender", "distance_m"],
              ([t, i + 1, j + 1, fmt(dataset.weights[t, i, j])]
               for t in range(t_count) for i in range(n) for j in range(n)
               if dataset.adjacency[t, i, j]))
    text = dataset.config.to_text() + f"dataset.hash = {dataset.config_hash}\n"
    (out / DATASET_CONFIG).write_text(text)


def load_dataset(path: Path) -> Dataset:
    path = Path(path)
    try:
        lines = (path / DATASET_CONFIG).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset config: {exc}") from None
    stored_hash = None
    body = []
    for line in lines:
        if line.startswith("dataset.hash"):
            stored_hash = line.partition("=")[2].strip()
        else:
            body.append(line)
    config = parse_config("\n".join(body))
    if stored_hash != config.dataset_hash():
        raise DataError(f"{path}: stored hash {stored_hash} does not match its config "
                        f"({config.dataset_hash()})")

    _, rows = read_csv(path / TRAJECTORY_FILE)
    n = config.scenario.uavs
    t_count = len(rows) // n
    if t_count * n != len(rows) or t_count != config.scenario.steps + 1:
        raise DataError(f"{path}: trajectory row count {len(rows)} does not match config")
    states = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(t_count, n, 3)

    _, rows = read_csv(path / SINR_FILE)
    if len(rows) != t_count * n * (n - 1):
        raise DataError(f"{path}: SINR row count {len(rows)} does not match config")
    features = np.array([float(r[3]) for r in rows]).reshape(t_count, n, n - 1)

    adjacency = np.zeros((t_count, n, n), dtype=bool)
    weights = np.zeros((t_count, n, n))
    _, rows = read_csv(path / GRAPH_FILE)
    for r in rows:
        t, i, j = int(r[0]), int(r[1]) - 1, int(r[2]) - 1
        adjacency[t, i, j] = True
        weights[t, i, j] = float(r[3])
    return Dataset(config, states, features, adjacency, weights, stored_hash)


# ---------------------------------------------------------------- checkpoints

def _tensor_lines(name: str, array: np.ndarray) -> list[str]:
    shape = " ".join(str(s) for s in array.shape)
    return [f"tensor {name} {array.ndim} {shape}".rstrip(),
            " ".join(fmt(v) for v in np.asarray(array, dtype=float).ravel())]


def _mlp_tensors(prefix: str, mlp: Mlp) -> list[tuple[str, np.ndarray]]:
    out = []
    for k, layer in enumerate(mlp.layers):
        out.append((f"{prefix}.{k}.weight", layer.weight))
        if layer.bias is not None:
            out.append((f"{prefix}.{k}.bias", layer.bias))
    return out


def _mlp_meta(prefix: str, mlp: Mlp) -> list[tuple[str, str]]:
    return [(f"{prefix}.activations", ",".join(l.activation for l in mlp.layers))]


def _kae_parts(prefix: str, model: KaeModel):
    tensors = [*_mlp_tensors(f"{prefix}encoder", model.encoder),
               (f"{prefix}koopman", model.K),
               *_mlp_tensors(f"{prefix}decoder", model.decoder)]
    meta = [*_mlp_meta(f"{prefix}encoder", model.encoder),
            *_mlp_meta(f"{prefix}decoder", model.decoder)]
    return tensors, meta


def checkpoint_text(model: KaeModel | GkaeModel, config_hash: str,
                    extra: dict[str, str] | None = None) -> str:
    if isinstance(model, GkaeModel):
        kind = "gkae"
        tensors, meta = _kae_parts("kae.", model.kae)
        for k, layer in enumerate(model.gnn):
            tensors += [(f"gnn.{k}.weight", layer.weight), (f"gnn.{k}.bias", layer.bias)]
        tensors += _mlp_tensors("graph_decoder", model.graph_decoder)
        meta += [("gnn.activations", ",".join(l.activation for l in model.gnn)),
                 *_mlp_meta("graph_decoder", model.graph_decoder),
                 ("n_nodes", str(model.n_nodes)), ("adjacency", model.adjacency),
                 ("affinity_scale", fmt(model.affinity_scale)),
                 ("node_identity", str(int(model.node_identity))),
                 ("horizon", str(model.kae.horizon))]
    else:
        kind = "kae"
        tensors, meta = _kae_parts("", model)
        meta.append(("horizon", str(model.horizon)))
    meta += [("initial_loss", fmt(model.initial_loss)), ("final_loss", fmt(model.final_loss))]
    meta += sorted((extra or {}).items())
    if model.normalizer is not None:
        tensors += [("normalizer.mean", model.normalizer.mean),
                    ("normalizer.std", model.normalizer.std)]
        meta.append(("normalizer.floor", fmt(model.normalizer.floor)))

    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"kind {kind}",
             f"config_hash {config_hash}"]
    lines += [f"meta {k} {v}" for k, v in meta]
    for name, array in tensors:
        lines += _tensor_lines(name, array)
    return "\n".join(lines) + "\n"


@dataclass
class Checkpoint:
    kind: str
    config_hash: str
    model: KaeModel | GkaeModel
    meta: dict[str, str]


def _build_mlp(prefix: str, tensors: dict[str, np.ndarray], meta: dict[str, str]) -> Mlp:
    acts = meta[f"{prefix}.activations"].split(",")
    return Mlp([DenseLayer(tensors[f"{prefix}.{k}.weight"],
                           tensors.get(f"{prefix}.{k}.bias"), a)
                for k, a in enumerate(acts)])


def _build_kae(prefix: str, tensors, meta) -> KaeModel:
    return KaeModel(_build_mlp(f"{prefix}encoder", tensors, meta),
                    DenseLayer(tensors[f"{prefix}koopman"], None, "identity"),
                    _build_mlp(f"{prefix}decoder", tensors, meta),
                    horizon=int(meta["horizon"]))


def parse_checkpoint(text: str) -> Checkpoint:
    lines = text.splitlines()
    try:
        magic, version = lines[0].split()
        if magic != CHECKPOINT_MAGIC:
            raise DataError("not a checkpoint file")
        if int(version) != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        kind = lines[1].split()[1]
        config_hash = lines[2].split()[1]
        meta: dict[str, str] = {}
        tensors: dict[str, np.ndarray] = {}
        k = 3
        while k < len(lines):
            head = lines[k].split(" ", 2)
            if head[0] == "meta":
                meta[head[1]] = head[2] if len(head) > 2 else ""
                k += 1
            elif head[0] == "tensor":
                parts = lines[k].split()
                name, ndim = parts[1], int(parts[2])
                shape = tuple(int(s) for s in parts[3:3 + ndim])
                values = [float(v) for v in lines[k + 1].split()]
                tensors[name] = np.array(values, dtype=float).reshape(shape)
                k += 2
            else:
                raise DataError(f"unexpected checkpoint line {k + 1}: {lines[k][:40]!r}")
    except (IndexError, ValueError, KeyError) as exc:
        raise DataError(f"malformed checkpoint: {exc}") from None

    normalizer = None
    if "normalizer.mean" in tensors:
        normalizer = Normalizer(tensors["normalizer.mean"], tensors["normalizer.std"],
                                float(meta["normalizer.floor"]))
    if kind == "kae":
        model = _build_kae("", tensors, meta)
        model.normalizer = normalizer
    elif kind == "gkae":
        acts = meta["gnn.activations"].split(",")
        gnn = [GnnLayer(tensors[f"gnn.{k}.weight"], tensors[f"gnn.{k}.bias"], a)
               for k, a in enumerate(acts)]
        model = GkaeModel(gnn, _build_kae("kae.", tensors, meta),
                          _build_mlp("graph_decoder", tensors, meta), int(meta["n_nodes"]),
                          normalizer, meta["adjacency"], float(meta["affinity_scale"]),
                          meta.get("node_identity", "0") == "1")
    else:
        raise DataError(f"unknown checkpoint kind {kind!r}")
    model.initial_loss = float(meta["initial_loss"])
    model.final_loss = float(meta["final_loss"])
    return Checkpoint(kind, config_hash, model, meta)


def save_checkpoint(path: Path, model, config_hash: str, extra: dict[str, str] | None = None):
    Path(path).write_text(checkpoint_text(model, config_hash, extra))


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from None
    return parse_checkpoint(text)


def finite_or_raise(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise DataError(f"{what} is not finite")
    return value
