"""Time-varying FANET graphs: edges, distance weights and SINR node features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (ChannelParams, SinrSnapshot, distance_matrix, sender_index,
                      sinr_snapshot)


@dataclass
class GraphSnapshot:
    """One graph realization.

    ``adjacency[i, j]`` is True when (i, j) is an edge, i.e. receiver i hears
    sender j at or above the threshold. ``weights[i, j]`` is the distance in
    meters on edges and 0 elsewhere. Snapshots rebuilt from predicted features
    carry edges but zero weights.
    """

    features: np.ndarray
    adjacency: np.ndarray
    weights: np.ndarray
    t: int = 0

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in np.argwhere(self.adjacency)}


def adjacency_from_features(features: np.ndarray, kappa: float) -> np.ndarray:
    """Boolean L x L adjacency from (L, L-1) feature rows; works on stacked (..., L, L-1)."""
    feats = np.asarray(features, dtype=float)
    n = feats.shape[-2]
    adj = np.zeros(feats.shape[:-2] + (n, n), dtype=bool)
    mask = ~np.eye(n, dtype=bool)
    adj[..., mask] = (feats >= kappa).reshape(feats.shape[:-2] + (n * (n - 1),))
    return adj


def edges_from_features(features: np.ndarray, kappa: float) -> set[tuple[int, int]]:
    feats = np.asarray(features, dtype=float)
    return {(i, sender_index(i, c))
            for i in range(feats.shape[0]) for c in range(feats.shape[1])
            if feats[i, c] >= kappa}


def build_snapshot(positions, params: ChannelParams, t: int = 0) -> GraphSnapshot:
    snap: SinrSnapshot = sinr_snapshot(positions, params, t)
    adj = adjacency_from_features(snap.matrix, params.kappa)
    weights = np.where(adj, distance_matrix(positions), 0.0)
    return GraphSnapshot(snap.matrix, adj, weights, t)


def snapshot_from_features(features: np.ndarray, kappa: float, t: int = 0) -> GraphSnapshot:
    adj = adjacency_from_features(features, kappa)
    return GraphSnapshot(np.asarray(features, dtype=float), adj, np.zeros(adj.shape), t)


def build_series(positions: np.ndarray, params: ChannelParams) -> list[GraphSnapshot]:
    """Snapshots for a (T+1, L, 2) position array."""
    return [build_snapshot(positions[t], params, t) for t in range(positions.shape[0])]
