from dataclasses import replace

import numpy as np
import pytest

from fanet_koopman.config import ConfigError, ExperimentConfig, load_config, parse_config, preset
from fanet_koopman.experiments import build_dataset
from fanet_koopman.gkae import GkaeModel
from fanet_koopman.koopman import KaeModel, Normalizer, TrainingConfig
from fanet_koopman.storage import (DataError, checkpoint_text, load_checkpoint, load_dataset,
                                   parse_checkpoint, save_checkpoint, save_dataset)


def test_table1_preset_values():
    cfg = preset("table1")
    assert cfg.scenario.uavs == 4 and cfg.scenario.steps == 2000
    assert (cfg.scenario.area_width, cfg.scenario.area_height) == (1000.0, 1000.0)
    assert cfg.channel.radius == 500.0 and cfg.channel.power == 0.1
    assert cfg.scenario.wind_velocity == 1e-8
    assert cfg.channel.params().kappa == pytest.approx(1.005e8, rel=1e-3)


def test_text_round_trip():
    cfg = preset("table1")
    cfg.evaluation.radii = [100.0, 250.5]
    cfg.channel.kappa_db, cfg.channel.radius = 3.0, None
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_overrides_and_comments():
    cfg = load_config(None, "table1", {"training.epochs": "7", "evaluation.horizons": "5, 9"})
    assert cfg.training.epochs == 7 and cfg.evaluation.horizons == [5, 9]
    cfg = parse_config("# comment\n\nscenario.uavs = 6  # trailing\n")
    assert cfg.scenario.uavs == 6


@pytest.mark.parametrize("text", [
    "scenario.nope = 1", "nosection.x = 1", "scenario.uavs", "scenario.uavs = four",
    "channel.self_interference = maybe"])
def test_bad_config_lines(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("overrides", [
    {"scenario.uavs": "1"},
    {"channel.kappa_db": "0"},                     # both kappa and radius set
    {"channel.radius": "none"},                    # neither set
    {"evaluation.kappa_db": "", "evaluation.radii": ""},
    {"evaluation.horizons": "0"},
    {"run.mode": "federated"},
])
def test_validation_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(None, "table1", overrides)


def test_hash_tracks_only_scenario_and_channel():
    a, b = preset("table1"), preset("table1")
    b.training.epochs = 1
    assert a.dataset_hash() == b.dataset_hash()
    b.scenario.seed = 9
    assert a.dataset_hash() != b.dataset_hash()


@pytest.fixture(scope="module")
def small_dataset():
    cfg = preset("smoke")
    cfg.scenario.steps = 40
    return build_dataset(cfg)


def test_dataset_round_trip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    again = load_dataset(tmp_path)
    np.testing.assert_array_equal(again.states, small_dataset.states)
    np.testing.assert_array_equal(again.features, small_dataset.features)
    np.testing.assert_array_equal(again.adjacency, small_dataset.adjacency)
    np.testing.assert_array_equal(again.weights, small_dataset.weights)
    assert again.config_hash == small_dataset.config_hash


def test_tampered_dataset_is_detected(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    cfg = tmp_path / "dataset.cfg"
    cfg.write_text(cfg.read_text().replace("scenario.seed = 0", "scenario.seed = 1"))
    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_truncated_dataset_is_detected(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path)
    traj = tmp_path / "trajectories.csv"
    traj.write_text("\n".join(traj.read_text().splitlines()[:-3]) + "\n")
    with pytest.raises(DataError):
        load_dataset(tmp_path)
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing")


def _models():
    rng = np.random.default_rng(0)
    cfg = TrainingConfig(latent_dim=3, hidden_width=4, hidden_layers=1, embedding_dim=5,
                         decoder_width=4)
    kae = KaeModel.init(2, cfg, rng)
    kae.normalizer = Normalizer.fit(10 ** rng.uniform(-3, 3, size=(20, 2)))
    gkae = GkaeModel.init(3, cfg, rng)
    gkae.normalizer = Normalizer.fit(10 ** rng.uniform(-3, 3, size=(20, 6)))
    tagged = GkaeModel.init(3, replace(cfg, node_identity=True), rng)
    tagged.normalizer = gkae.normalizer
    return kae, gkae, tagged


@pytest.mark.parametrize("which", [0, 1, 2])
def test_checkpoint_round_trip_is_byte_exact(tmp_path, which):
    model = _models()[which]
    model.initial_loss, model.final_loss = 3.25, 0.1 / 3
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, "abc123", {"seed": "4"})
    ck = load_checkpoint(path)
    assert ck.config_hash == "abc123" and ck.meta.get("seed") == "4"
    for p, q in zip(model.parameters(), ck.model.parameters()):
        np.testing.assert_array_equal(p, q)
    assert getattr(ck.model, "node_identity", False) == getattr(model, "node_identity", False)
    assert checkpoint_text(ck.model, "abc123", {"seed": "4"}) == path.read_text()


def test_loaded_checkpoint_predicts_identically(tmp_path):
    kae = _models()[0]
    save_checkpoint(tmp_path / "k.ckpt", kae, "h")
    again = load_checkpoint(tmp_path / "k.ckpt").model
    x = np.array([0.5, 20.0])
    np.testing.assert_array_equal(again.normalizer.denormalize(again.predict_normalized(
        again.normalizer.normalize(x), 5)), kae.normalizer.denormalize(kae.predict_normalized(
            kae.normalizer.normalize(x), 5)))


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("fanet-koopman-checkpoint", "something-else", 1),
    lambda t: t[: len(t) // 2],
    lambda t: "",
])
def test_corrupt_checkpoints_raise(mutate):
    kae = _models()[0]
    with pytest.raises(DataError):
        parse_checkpoint(mutate(checkpoint_text(kae, "h")))
