"""Koopman-autoencoder SINR and isolation prediction for simulated FANETs."""

from .channel import ChannelParams, kappa_from_radius, sinr, sinr_snapshot
from .config import ExperimentConfig, load_config, preset
from .dynamics import FleetSampling, UavParams, UavState, WindParams, sample_fleet, simulate_fleet
from .gkae import GkaeModel, train_gkae
from .koopman import KaeModel, TrainingConfig, dmd_fit, train_kae

__all__ = [
    "ChannelParams", "ExperimentConfig", "FleetSampling", "GkaeModel", "KaeModel",
    "TrainingConfig", "UavParams", "UavState", "WindParams", "dmd_fit", "kappa_from_radius",
    "load_config", "preset", "sample_fleet", "simulate_fleet", "sinr", "sinr_snapshot",
    "train_gkae", "train_kae",
]
