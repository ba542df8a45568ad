"""Tests for model training and prediction."""

import numpy as np
import pytest

from src.core.distributions import DistFamily
from src.core.errors import EpisodeCapError, ValidationError
from src.core.trace import Address, HyperStore
from src.models.predict_model import evaluate, load_store, store_summary
from src.models.train_model import (
    STORE_FORMAT,
    TrainConfig,
    reward_stats,
    run_batch,
    save_store,
    train,
)
from tests.toy import THETA, ConstantProgram, ToyProgram, ToyWorld


class _LoopingProgram:
    def __call__(self, ctx, state):
        while True:
            ctx.tick()


def test_train_config_defaults():
    """Defaults follow the documented settings."""
    config = TrainConfig()
    assert config.samples_per_step == 1000
    assert config.rho0 == 0.1
    assert config.tau == 1.0
    assert config.kappa == 0.5
    assert config.rmsprop_decay == 0.9
    assert config.beta == 1.0


def test_train_config_validation():
    """Unknown keys and bad values are rejected."""
    assert TrainConfig.from_dict({"steps": "5"}).steps == 5
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"stepz": 5})
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"samples_per_step": 1})
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"beta": -1.0})
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"control_variate": "median"})


def test_zero_steps():
    """K = 0 leaves the store at its lazily initialized priors and the history empty."""
    store, history = train(ToyProgram(), ToyWorld(), TrainConfig(steps=0, samples_per_step=10))
    assert len(store) == 0
    assert list(history.columns) == ["step", "mean_reward", "stderr"]
    assert history.empty


def test_toy_problem_moves_toward_optimum():
    """The learned mean approaches the optimum at 3."""
    config = TrainConfig(samples_per_step=100, steps=100, seed=3)
    store, history = train(ToyProgram(mu0=2.0), ToyWorld(), config)
    assert store.get(THETA).rho[0] == pytest.approx(3.0, abs=0.2)
    assert store.get(THETA).rho[1] == 0.0
    assert len(history) == 100
    assert history["mean_reward"].iloc[-10:].mean() > history["mean_reward"].iloc[0]


def test_train_is_reproducible():
    """Same seed, same store and history."""
    config = TrainConfig(samples_per_step=20, steps=5, seed=9)
    store_a, history_a = train(ToyProgram(), ToyWorld(), config)
    store_b, history_b = train(ToyProgram(), ToyWorld(), config)
    np.testing.assert_array_equal(store_a.get(THETA).rho, store_b.get(THETA).rho)
    assert history_a.equals(history_b)


def test_workers_do_not_change_results():
    """Parallel batches reproduce the serial run exactly."""
    config = TrainConfig(samples_per_step=16, steps=3, seed=4)
    serial, history_serial = train(ToyProgram(), ToyWorld(), config, workers=1)
    parallel, history_parallel = train(ToyProgram(), ToyWorld(), config, workers=2)
    np.testing.assert_array_equal(serial.get(THETA).rho, parallel.get(THETA).rho)
    assert history_serial.equals(history_parallel)


def test_run_batch_episode_order():
    """Traces come back in episode order with their derived seeds."""
    traces = run_batch(ToyProgram(), ToyWorld(), HyperStore(), 1, 0, 6)
    again = run_batch(ToyProgram(), ToyWorld(), HyperStore(), 1, 0, 6)
    assert [t.seed for t in traces] == [t.seed for t in again]
    assert [t.reward for t in traces] == [t.reward for t in again]
    assert len(set(t.seed for t in traces)) == 6


def test_batches_leave_the_store_to_the_updater():
    """Episodes only read the store; absorbing the batch registers the new addresses."""
    store = HyperStore()
    traces = run_batch(ToyProgram(mu0=2.0), ToyWorld(), store, 1, 0, 4)
    assert len(store) == 0
    assert store.absorb(traces) == 1
    assert store.get(THETA).rho[0] == 2.0


def test_evaluate_is_deterministic_and_read_only():
    """Same seed twice gives identical rewards; the store is not modified."""
    store, _ = train(ToyProgram(), ToyWorld(), TrainConfig(samples_per_step=10, steps=2))
    rho = store.get(THETA).rho.copy()
    first = evaluate(ToyProgram(), ToyWorld(), store, episodes=50, seed=2)
    second = evaluate(ToyProgram(), ToyWorld(), store, episodes=50, seed=2)
    np.testing.assert_array_equal(first.rewards, second.rewards)
    np.testing.assert_array_equal(store.get(THETA).rho, rho)
    assert first.episodes == 50


def test_evaluate_with_empty_store():
    """Unseen addresses use their priors without growing the store."""
    store = HyperStore()
    evaluate(ToyProgram(), ToyWorld(), store, episodes=5)
    assert len(store) == 0


def test_deterministic_policy_has_zero_stderr():
    """A deterministic policy in a deterministic world has no spread."""
    result = evaluate(ConstantProgram(), ToyWorld(), HyperStore(), episodes=20)
    assert result.mean == 4.0
    assert result.stderr == 0.0


def test_episode_cap_aborts_training():
    """Non-terminating episodes are errors, not truncations."""
    with pytest.raises(EpisodeCapError):
        train(_LoopingProgram(), ToyWorld(), TrainConfig(samples_per_step=2, steps=1))


def test_reward_stats():
    """Standard error is std / sqrt(n), and 0 for a single reward."""
    assert reward_stats([3.0]) == (3.0, 0.0)
    mean, stderr = reward_stats([1.0, 3.0])
    assert mean == 2.0
    assert stderr == pytest.approx(1.0)


def test_store_roundtrip(tmp_path):
    """Saved stores load back with exact parameters and header."""
    store = HyperStore()
    store.put(Address.of("Q", 0, 1), DistFamily.beta(), [0.1 + 0.2, -1e-300])
    store.put(Address.of("move", "start", 2, "good"), DistFamily.beta(), [0.5, 0.25])
    store.put(Address.of("A", 3, 4), DistFamily.normal(learn_scale=False), [1 / 3, 0.0])
    store.put(Address.of("w"), DistFamily.dirichlet(3), [0.0, 1.0, 2.0])
    path = tmp_path / "hyperstore.txt"
    save_store(store, str(path), {"domain": "ctp", "seed": 5})

    assert path.read_text().splitlines()[0] == STORE_FORMAT
    loaded, header = load_store(str(path))
    assert header == {"domain": "ctp", "seed": "5"}
    assert list(loaded) == list(store)
    for address, entry in store.items():
        assert loaded.get(address).family == entry.family
        np.testing.assert_array_equal(loaded.get(address).rho, entry.rho)
    assert store_summary(loaded) == {"entries": 4,
                                     "families": {"beta": 2, "normal": 1, "dirichlet": 1}}


def test_load_store_rejects_other_files(tmp_path):
    """Missing or foreign files are validation errors."""
    with pytest.raises(ValidationError):
        load_store(str(tmp_path / "missing.txt"))
    path = tmp_path / "other.txt"
    path.write_text("step,mean_reward,stderr\n")
    with pytest.raises(ValidationError):
        load_store(str(path))
    path.write_text(f"{STORE_FORMAT}\nQ:0:1\tbeta\t2\t-\t0.0\n")
    with pytest.raises(ValidationError):
        load_store(str(path))
