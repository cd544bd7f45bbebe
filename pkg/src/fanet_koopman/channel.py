"""Path-loss SINR between UAVs, neighbor sets and isolation events."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateGeometryError(ValueError):
    """Two UAVs occupy the same position, so path loss is undefined."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x, floor: float = 1e-12):
    return 10.0 * np.log10(np.maximum(np.asarray(x, dtype=float), floor))


@dataclass(frozen=True)
class ChannelParams:
    """Channel constants. ``transmit_power`` is a scalar or one value per UAV (watts)."""

    transmit_power: float | tuple[float, ...] = 0.1
    noise_dbm_per_hz: float = -174.0
    bandwidth: float = 1e6
    path_loss_exponent: float = 2.0
    kappa: float = 1.0
    self_interference: bool = False

    def __post_init__(self):
        powers = np.atleast_1d(np.asarray(self.transmit_power, dtype=float))
        if np.any(powers <= 0):
            raise ValueError("transmit power must be positive")
        if self.bandwidth <= 0 or self.path_loss_exponent <= 0:
            raise ValueError("bandwidth and path-loss exponent must be positive")
        if not self.kappa > 0:
            raise ValueError(f"SINR threshold kappa must be > 0, got {self.kappa}")

    @property
    def noise_power(self) -> float:
        """N0 * B in watts."""
        return dbm_to_watts(self.noise_dbm_per_hz) * self.bandwidth

    def powers(self, n: int) -> np.ndarray:
        p = np.atleast_1d(np.asarray(self.transmit_power, dtype=float))
        if p.size == 1:
            return np.full(n, p[0])
        if p.size != n:
            raise ValueError(f"{p.size} transmit powers given for {n} UAVs")
        return p

    def with_kappa(self, kappa: float) -> ChannelParams:
        return ChannelParams(self.transmit_power, self.noise_dbm_per_hz, self.bandwidth,
                             self.path_loss_exponent, kappa, self.self_interference)


@dataclass
class SinrSnapshot:
    """Row i holds the SINR at receiver i from every sender j != i, ascending j."""

    matrix: np.ndarray
    t: int = 0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class IsolationFlags:
    per_uav: tuple[bool, ...]
    network: bool


def sender_index(i: int, col: int) -> int:
    """Sender index held in column ``col`` of row ``i`` (0-based)."""
    return col if col < i else col + 1


def column_index(i: int, j: int) -> int:
    """Column of sender ``j`` inside row ``i``; inverse of :func:`sender_index`."""
    if i == j:
        raise ValueError("a UAV has no SINR column for itself")
    return j if j < i else j - 1


def distance_matrix(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _received_power(positions, params: ChannelParams) -> np.ndarray:
    """rx[i, j] = P_j d_ij^-eta, with the diagonal set to zero."""
    d = distance_matrix(positions)
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] == 0.0):
        i, j = np.argwhere((d == 0.0) & off)[0]
        raise DegenerateGeometryError(f"UAVs {i} and {j} share a position")
    rx = np.zeros_like(d)
    rx[off] = params.powers(n)[np.nonzero(off)[1]] * d[off] ** (-params.path_loss_exponent)
    return rx


def sinr(i: int, j: int, positions, params: ChannelParams) -> float:
    """SINR at receiver ``i`` from sender ``j`` (0-based indices), linear ratio."""
    if i == j:
        raise ValueError("receiver and sender must differ")
    rx = _received_power(positions, params)
    interference = sum(rx[i, k] for k in range(rx.shape[0]) if k != j)
    if params.self_interference:
        # own transmitter leaks in at the 1 m reference distance
        interference += params.powers(rx.shape[0])[i]
    return float(rx[i, j] / (params.noise_power + interference))


def sinr_matrix(positions, params: ChannelParams) -> np.ndarray:
    """Full L x L SINR matrix gamma[i, j] = SINR at i from j; diagonal is NaN."""
    rx = _received_power(positions, params)
    n = rx.shape[0]
    # interference[i, j] = sum_{k != j} rx[i, k]; summed directly to avoid cancellation
    interference = rx @ (1.0 - np.eye(n))
    denom = params.noise_power + interference
    if params.self_interference:
        denom = denom + params.powers(n)[:, None]
    gamma = rx / denom
    gamma[np.eye(n, dtype=bool)] = np.nan
    return gamma


def to_feature_rows(full: np.ndarray) -> np.ndarray:
    """Drop the diagonal of an L x L (or ... x L x L) array into L x (L-1) rows."""
    n = full.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return full[..., mask].reshape(full.shape[:-2] + (n, n - 1))


def sinr_snapshot(positions, params: ChannelParams, t: int = 0) -> SinrSnapshot:
    pos = np.asarray(positions, dtype=float)
    if pos.shape[0] < 2:
        raise ValueError("need at least two UAVs")
    return SinrSnapshot(to_feature_rows(sinr_matrix(pos, params)), t)


def neighbor_set(snapshot: SinrSnapshot, i: int, kappa: float) -> set[int]:
    row = snapshot.matrix[i]
    return {sender_index(i, c) for c in range(row.shape[0]) if row[c] >= kappa}


def isolated_rows(features: np.ndarray, kappa: float) -> np.ndarray:
    """Per-UAV isolation for feature rows of shape (..., L, L-1)."""
    return ~np.any(np.asarray(features) >= kappa, axis=-1)


def isolation_flags(snapshot: SinrSnapshot, kappa: float) -> IsolationFlags:
    per = isolated_rows(snapshot.matrix, kappa)
    return IsolationFlags(tuple(bool(v) for v in per), bool(per.any()))


def kappa_from_radius(radius: float, params: ChannelParams, power: float | None = None) -> float:
    """Noise-only SINR at distance ``radius``: the threshold equivalent of a range."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    p = float(np.atleast_1d(params.transmit_power)[0]) if power is None else power
    return float(p * radius ** (-params.path_loss_exponent) / params.noise_power)
