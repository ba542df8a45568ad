"""Tests for addresses, the hyperparameter store and episode contexts."""

import math

import numpy as np
import pytest

from src.core.distributions import DistFamily
from src.core.errors import ArgumentError, EpisodeCapError, RewardError, TraceError
from src.core.trace import (
    EVAL_STREAM,
    TRAIN_STREAM,
    Address,
    EpisodeContext,
    HyperStore,
    episode_rng,
    episode_seed,
    trace_sample,
)

Q01 = Address.of("Q", 0, 1)


def _ctx(store=None, seed=0, **kwargs):
    store = HyperStore() if store is None else store
    return EpisodeContext(store, episode_rng(seed), seed=seed, **kwargs)


def test_address_equality_and_order():
    """Addresses compare structurally; ints sort before strings."""
    assert Address.of("Q", 0, 1) == Address("Q", (0, 1))
    assert hash(Address.of("Q", 0, 1)) == hash(Address("Q", (0, 1)))
    assert Address.of("Q", 0, 2) < Address.of("Q", 1, 0)
    assert Address.of("move", 3) < Address.of("move", "start")
    assert sorted([Address.of("b"), Address.of("a", 5), Address.of("a", 1)]) == [
        Address.of("a", 1), Address.of("a", 5), Address.of("b")]


def test_address_text_form():
    """str and parse are inverse."""
    address = Address.of("move", "start", 3, "good")
    assert str(address) == "move:start:3:good"
    assert Address.parse(str(address)) == address
    assert Address.parse("gamma") == Address.of("gamma")


def test_address_rejects_bad_arguments():
    """Only ints and strings are allowed as arguments."""
    with pytest.raises(ArgumentError):
        Address.of("Q", True)
    with pytest.raises(ArgumentError):
        Address.of("Q", 0.5)


def test_address_text_form_is_unambiguous():
    """Strings that would parse back as integers or split on ':' are rejected."""
    for arg in ("3", "-12", "a:b"):
        with pytest.raises(ArgumentError):
            Address.of("x", arg)
    for tag in ("", "a:b"):
        with pytest.raises(ArgumentError):
            Address.of(tag, 1)
    for address in (Address.of("x", "3a", -4, ""), Address.of("x", "-"), Address.of("y")):
        assert Address.parse(str(address)) == address


def test_first_use_registers_prior():
    """First use of ("Q", 0, 1) adds a Beta(1, 1) entry."""
    store = HyperStore()
    ctx = _ctx(store)
    value = trace_sample(ctx, Q01, DistFamily.beta(), (1.0, 1.0))
    assert 0.0 < value < 1.0
    assert Q01 in store
    np.testing.assert_allclose(store.hypers(Q01), [1.0, 1.0])
    trace = ctx.finish(-1.0)
    assert trace.records[0].grad.shape == (2,)


def test_registration_is_idempotent():
    """A second episode touching the same address leaves the store size unchanged."""
    store = HyperStore()
    for seed in range(3):
        trace_sample(_ctx(store, seed), Q01, DistFamily.beta(), (1.0, 1.0))
    assert len(store) == 1


def test_duplicate_address_rejected():
    """An address may be sampled once per episode."""
    ctx = _ctx()
    ctx.sample(Q01, DistFamily.beta(), (1.0, 1.0))
    with pytest.raises(TraceError):
        ctx.sample(Q01, DistFamily.beta(), (1.0, 1.0))


def test_family_mismatch_rejected():
    """A stored address cannot change family."""
    store = HyperStore()
    _ctx(store).sample(Q01, DistFamily.beta(), (1.0, 1.0))
    with pytest.raises(TraceError):
        _ctx(store).sample(Q01, DistFamily.normal(), (0.0, 0.0))


def test_fixed_family_records_have_no_gradient():
    """World noise is traced but never stored."""
    store = HyperStore()
    ctx = _ctx(store)
    ctx.flip(Address.of("noise"), 0.3)
    record = ctx.finish(0.0).records[0]
    assert record.grad is None
    assert len(store) == 0


def test_frozen_context_leaves_store_alone():
    """Evaluation contexts draw unseen addresses from their initial hypers."""
    store = HyperStore()
    ctx = _ctx(store, frozen=True)
    ctx.sample(Q01, DistFamily.beta(), (2.0, 5.0))
    assert len(store) == 0
    np.testing.assert_allclose(ctx.finish(0.0).records[0].hypers, [2.0, 5.0])


def test_memo_draws_once():
    """memo returns the value traced earlier in the episode."""
    ctx = _ctx()
    first = ctx.memo(Q01, DistFamily.beta(), (1.0, 1.0))
    again = ctx.memo(Q01, DistFamily.beta(), (1.0, 1.0))
    assert first == again
    assert len(ctx.finish(0.0).records) == 1


def test_next_address_counts_occurrences():
    """Repeated decisions at the same place get distinct addresses."""
    ctx = _ctx()
    assert ctx.next_address("select", 4) == Address.of("select", 4, 0)
    assert ctx.next_address("select", 4) == Address.of("select", 4, 1)
    assert ctx.next_address("select", 5) == Address.of("select", 5, 0)


def test_step_cap():
    """Exceeding ten times the horizon is a hard error."""
    ctx = _ctx(horizon=2)
    ctx.tick(20)
    with pytest.raises(EpisodeCapError):
        ctx.tick()


def test_non_finite_reward_rejected():
    """Traces need a finite reward."""
    with pytest.raises(RewardError):
        _ctx().finish(math.nan)


def test_trace_value_lookup():
    """Recorded values can be looked up by address."""
    ctx = _ctx()
    index = ctx.choose(Address.of("pick"), [0.0, 1.0])
    trace = ctx.finish(2.0)
    assert index == 1
    assert trace.value(Address.of("pick")) == 1
    assert trace.log_density == pytest.approx(0.0)
    assert trace.learnable_records() == []


def test_episode_seeds():
    """Episode seeds are deterministic and separated by step, episode and stream."""
    seed = episode_seed(7, 3, 11)
    assert seed == episode_seed(7, 3, 11, TRAIN_STREAM)
    assert 0 <= seed < 2 ** 64
    others = {episode_seed(7, 3, 12), episode_seed(7, 4, 11), episode_seed(8, 3, 11),
              episode_seed(7, 3, 11, EVAL_STREAM)}
    assert seed not in others
    assert episode_rng(seed).random() == episode_rng(seed).random()


def test_absorb_uses_initial_hypers():
    """Addresses first seen by a worker are registered from their recorded init hypers."""
    worker_store = HyperStore()
    ctx = _ctx(worker_store)
    ctx.sample(Q01, DistFamily.beta(), (1.0, 3.0))
    trace = ctx.finish(0.0)

    store = HyperStore()
    assert store.absorb([trace, trace]) == 1
    np.testing.assert_array_equal(store.get(Q01).rho, worker_store.get(Q01).rho)


def test_store_iterates_in_address_order():
    """Iteration order does not depend on insertion order."""
    store = HyperStore()
    for address in [Address.of("Q", 2, 0), Address.of("Q", 0, 1), Address.of("A", 9)]:
        store.register(address, DistFamily.beta(), (1.0, 1.0))
    assert list(store) == [Address.of("A", 9), Address.of("Q", 0, 1), Address.of("Q", 2, 0)]


def test_store_rejects_fixed_families():
    """Only learnable families are stored."""
    with pytest.raises(TraceError):
        HyperStore().register(Q01, DistFamily.bernoulli(), [0.5])
