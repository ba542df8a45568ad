"""Tests for the Guess Who domain."""

import numpy as np
import pandas as pd
import pytest

from src.core.errors import ArgumentError, DegenerateBeliefError, ValidationError
from src.core.trace import Address, EpisodeContext, HyperStore, episode_rng
from src.domains.guesswho import (
    GuessWhoProgram,
    GuessWhoWorld,
    LearnedSettings,
    Ontology,
    QuestionPolicy,
    answer,
    belief_update,
    discounted_weights,
    episode,
    learned_choose,
    reward_by_budget,
    uniform_belief,
    voi_choose,
    voi_values,
)
from src.models.predict_model import evaluate


@pytest.fixture(scope="module")
def ontology():
    return Ontology.load()


def _ctx(seed=0, store=None):
    return EpisodeContext(HyperStore() if store is None else store, episode_rng(seed), seed=seed)


def _small(values):
    table = pd.DataFrame({"x": values}, index=[f"s{i}" for i in range(len(values))])
    return Ontology(table)


def test_ontology_shape(ontology):
    """24 individuals and 19 yes/no questions."""
    assert ontology.n_individuals == 24
    assert ontology.n_questions == 19
    assert ontology.truth.shape == (19, 24)
    assert ontology.questions.count(("hair-color", "white")) == 1
    assert ontology.label(ontology.question_index("beard", "true")) == "beard=true"


def test_ontology_validation():
    """Wrong sizes, duplicates and missing values are rejected."""
    with pytest.raises(ValidationError):
        _small(["a", "b"]).validate()
    with pytest.raises(ValidationError):
        Ontology(pd.DataFrame({"x": ["a", "b"]}, index=["s", "s"]))
    with pytest.raises(ValidationError):
        Ontology(pd.DataFrame({"x": ["a", None]}, index=["s", "t"]))
    with pytest.raises(ArgumentError):
        _small(["a", "b"]).question_index("x", "c")


def test_truthful_answers(ontology):
    """With accuracy 1 the answers read the attribute table."""
    male = ontology.question_index("gender", "male")
    beard = ontology.question_index("beard", "true")
    assert answer(ontology, ontology.index("alex"), male, 1.0, _ctx()) is True
    assert answer(ontology, ontology.index("anita"), beard, 1.0, _ctx()) is False


def test_answer_accuracy(ontology):
    """Answers are truthful at the configured rate."""
    male = ontology.question_index("gender", "male")
    alex = ontology.index("alex")
    truthful = sum(answer(ontology, alex, male, 0.9, _ctx(seed)) for seed in range(20000))
    assert truthful / 20000 == pytest.approx(0.9, abs=0.008)


def test_belief_update_example():
    """Three uniform candidates, a yes to the first one's predicate."""
    small = _small(["yes", "no", "no"])
    posterior = belief_update(uniform_belief(small), 0, True, 0.9, small)
    np.testing.assert_allclose(posterior, [9 / 11, 1 / 11, 1 / 11])


def test_uninformative_question():
    """A predicate shared by every candidate leaves the belief unchanged."""
    small = Ontology(pd.DataFrame({"x": ["a", "a", "b"], "y": ["u", "u", "u"]},
                                  index=["s0", "s1", "s2"]))
    b = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(belief_update(b, small.question_index("y", "u"), True, 0.9, small), b)


def test_opposite_answers_cancel():
    """Yes then no to the same question returns to the prior."""
    small = _small(["yes", "no", "no"])
    b = uniform_belief(small)
    after = belief_update(belief_update(b, 0, True, 0.8, small), 0, False, 0.8, small)
    np.testing.assert_allclose(after, b)


def test_update_order_is_irrelevant(ontology):
    """The posterior depends on the answers, not their order."""
    b = uniform_belief(ontology)
    q1, q2 = ontology.question_index("gender", "male"), ontology.question_index("hat", "true")
    first = belief_update(belief_update(b, q1, True, 0.9, ontology), q2, False, 0.9, ontology)
    second = belief_update(belief_update(b, q2, False, 0.9, ontology), q1, True, 0.9, ontology)
    np.testing.assert_allclose(first, second)


def test_degenerate_belief(ontology):
    """Perfect answers that contradict every candidate are an explicit error."""
    b = np.zeros(24)
    b[ontology.index("alex")] = 1.0
    with pytest.raises(DegenerateBeliefError):
        belief_update(b, ontology.question_index("gender", "male"), False, 1.0, ontology)


def test_belief_arguments(ontology):
    """Beliefs must be distributions of the right size; accuracy lies in (0.5, 1]."""
    with pytest.raises(ArgumentError):
        belief_update(np.full(24, 0.5), 0, True, 0.9, ontology)
    with pytest.raises(ArgumentError):
        belief_update(np.full(3, 1 / 3), 0, True, 0.9, ontology)
    with pytest.raises(ArgumentError):
        belief_update(uniform_belief(ontology), 0, True, 0.5, ontology)


def test_voi_two_candidates():
    """A question separating two candidates is worth 0.9 - 0.5."""
    small = _small(["yes", "no"])
    assert voi_values(uniform_belief(small), small, 0.9)[0] == pytest.approx(0.4)


def test_voi_uninformative_is_zero():
    """Shared predicates carry no information."""
    small = Ontology(pd.DataFrame({"x": ["a", "b"], "y": ["u", "u"]}, index=["s0", "s1"]))
    values = voi_values(uniform_belief(small), small, 0.9)
    assert values[small.question_index("y", "u")] == pytest.approx(0.0)
    assert voi_choose(uniform_belief(small), small, 0.9) == small.question_index("x", "a")


def test_voi_matches_enumeration(ontology):
    """VOI equals the expected posterior maximum enumerated over both responses."""
    rng = np.random.default_rng(0)
    for _ in range(100):
        b = rng.dirichlet(np.ones(24))
        b = b / b.sum()
        values = voi_values(b, ontology, 0.85)
        for q in range(ontology.n_questions):
            expected = -b.max()
            for response in (True, False):
                p_yes = np.where(ontology.truth[q], 0.85, 0.15) @ b
                p = p_yes if response else 1.0 - p_yes
                expected += p * belief_update(b, q, response, 0.85, ontology).max()
            assert values[q] == pytest.approx(expected, abs=1e-12)


def test_voi_ties_take_smallest_index():
    """Equally valuable questions resolve to the first one."""
    small = Ontology(pd.DataFrame({"x": ["a", "b"], "y": ["c", "d"]}, index=["s0", "s1"]))
    assert voi_choose(uniform_belief(small), small, 0.9) == 0


def test_discounted_weights():
    """gamma = 0.5, one earlier ask and (A b)_q = 0.8 give 0.4."""
    v = discounted_weights(np.array([[0.8]]), 0.5, np.array([1.0]), np.array([1]))
    assert v[0] == pytest.approx(0.4)
    weights = np.arange(6.0).reshape(2, 3)
    b = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(discounted_weights(weights, 0.3, b, np.zeros(2)), weights @ b)


def test_uniform_weights_give_uniform_questions(ontology):
    """Equal weights and a fresh history make every question equally likely."""
    v = discounted_weights(np.ones((19, 24)), 0.7, uniform_belief(ontology), np.zeros(19))
    np.testing.assert_allclose(v / v.sum(), 1 / 19)


def test_learned_choose_addresses(ontology):
    """A, gamma are drawn once per episode; each question is a fixed-family draw."""
    store = HyperStore()
    ctx = _ctx(store=store)
    b, hist = uniform_belief(ontology), np.zeros(19, dtype=int)
    learned_choose(ctx, b, hist, ontology)
    learned_choose(ctx, b, hist, ontology)
    trace = ctx.finish(0.0)
    assert len(store) == 19 * 24 + 1
    assert Address.of("A", 18, 23) in store
    assert Address.of("gamma") in store
    assert [r.address for r in trace.records[-2:]] == [Address.of("question", 0),
                                                       Address.of("question", 1)]
    assert len(trace.learnable_records()) == 19 * 24 + 1


def test_learned_settings():
    """Scale freezing follows the settings."""
    store = HyperStore()
    ctx = _ctx(store=store)
    small = _small(["yes", "no"])
    settings = LearnedSettings(a_sigma=2.0, learn_a_sigma=True, learn_gamma_sigma=False)
    learned_choose(ctx, uniform_belief(small), np.zeros(1, dtype=int), small, settings)
    a = store.get(Address.of("A", 0, 0))
    assert list(a.family.learn_mask) == [True, True]
    np.testing.assert_allclose(a.hypers, [0.0, np.log(2.0)])
    assert list(store.get(Address.of("gamma")).family.learn_mask) == [True, False]
    with pytest.raises(ArgumentError):
        LearnedSettings(a_sigma=0.0)


def test_no_questions_is_a_uniform_guess(ontology):
    """T = 0 identifies the hidden individual one time in 24."""
    program = GuessWhoProgram(ontology, 0, policy="random")
    result = evaluate(program, GuessWhoWorld(ontology, 0), HyperStore(), episodes=10000)
    assert set(np.unique(result.rewards)) <= {0.0, 1.0}
    assert result.mean == pytest.approx(1 / 24, abs=0.01)


def test_perfect_answers_leave_only_lookalikes(ontology):
    """With exact answers the final candidates are those answering like the hidden one."""
    policy = QuestionPolicy("voi", ontology, 1.0)
    for hidden in range(24):
        ctx = _ctx(hidden)
        reward = episode(policy, hidden, 19, 1.0, ctx, ontology)
        asked = ctx.info["questions"]
        rows = ontology.truth[asked]
        lookalikes = np.flatnonzero((rows == rows[:, [hidden]]).all(axis=0))
        assert ctx.info["candidates"] == len(lookalikes)
        assert ctx.info["guess"] in lookalikes
        assert reward == float(ctx.info["guess"] == hidden)


def test_episode_records(ontology):
    """Each round asks, answers and counts a step."""
    ctx = EpisodeContext(HyperStore(), episode_rng(1), horizon=4)
    reward = episode(QuestionPolicy("random", ontology, 0.9), 3, 3, 0.9, ctx, ontology)
    assert reward in (0.0, 1.0)
    assert ctx.steps == 3
    assert len(ctx.info["questions"]) == 3
    with pytest.raises(ArgumentError):
        episode(QuestionPolicy("random", ontology, 0.9), 3, -1, 0.9, _ctx(), ontology)


def test_program_arguments(ontology):
    """Unknown policies, negative budgets and poor accuracies are rejected."""
    with pytest.raises(ArgumentError):
        GuessWhoProgram(ontology, 2, policy="oracle")
    with pytest.raises(ArgumentError):
        GuessWhoProgram(ontology, -1)
    with pytest.raises(ArgumentError):
        GuessWhoProgram(ontology, 2, accuracy=0.5)
    assert GuessWhoWorld(ontology, 6).horizon == 7


def test_reward_by_budget(ontology):
    """One row per policy and budget."""
    table = reward_by_budget(ontology, ["random", "voi"], [0, 2], HyperStore(), episodes=20)
    assert list(table.columns) == ["policy", "T", "mean_reward", "stderr"]
    assert list(zip(table.policy, table["T"])) == [("random", 0), ("random", 2), ("voi", 0),
                                                   ("voi", 2)]
    assert table.mean_reward.between(0, 1).all()


def test_sequential_updates_match_enumeration(ontology):
    """Chained updates equal the normalized product of all answer likelihoods."""
    rng = np.random.default_rng(1)
    b0 = uniform_belief(ontology)
    for _ in range(1000):
        length = rng.integers(1, 11)
        questions = rng.integers(19, size=length)
        responses = rng.random(length) < 0.5
        b = b0
        joint = b0.copy()
        for q, r in zip(questions, responses):
            b = belief_update(b, q, bool(r), 0.9, ontology)
            joint = joint * np.where(ontology.truth[q] == r, 0.9, 0.1)
        np.testing.assert_allclose(b, joint / joint.sum(), rtol=0, atol=1e-12)


def test_subset_keeps_questions(ontology):
    """Sub-ontologies keep the full question list and their rows of the truth table."""
    names = ["alex", "anita", "bill"]
    small = ontology.subset(names)
    assert small.individuals == tuple(names)
    assert small.questions == ontology.questions
    columns = [ontology.index(name) for name in names]
    np.testing.assert_array_equal(small.truth, ontology.truth[:, columns])


def test_voi_reward_grows_with_budget(ontology):
    """With exact answers the VOI policy's expected reward never drops as T grows."""
    rng = np.random.default_rng(3)
    for _ in range(30):
        names = rng.choice(ontology.individuals, size=4, replace=False)
        small = ontology.subset(list(names))
        policy = QuestionPolicy("voi", small, 1.0)
        expected = []
        for budget in range(6):
            total = 0.0
            for hidden in range(4):
                ctx = _ctx(hidden)
                episode(policy, hidden, budget, 1.0, ctx, small)
                # the hidden individual is always among the final candidates
                total += 1.0 / ctx.info["candidates"]
            expected.append(total / 4)
        assert all(a <= b + 1e-12 for a, b in zip(expected[:-1], expected[1:]))
        assert expected[0] == pytest.approx(0.25)
