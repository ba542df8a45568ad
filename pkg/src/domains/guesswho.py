"""Guess Who diagnosis: the ontology, noisy answers, exact beliefs and question policies."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from src.core.distributions import DistFamily
from src.core.errors import ArgumentError, DegenerateBeliefError, ValidationError
from src.core.trace import Address, EpisodeContext, HyperStore
from src.models.predict_model import evaluate

logger = logging.getLogger(__name__)

Question = Tuple[str, str]

ONTOLOGY_FILE = Path(__file__).resolve().parents[1] / "data" / "guesswho_ontology.csv"
N_INDIVIDUALS = 24
N_QUESTIONS = 19
TIE_TOL = 1e-12
BELIEF_TOL = 1e-12
POLICIES = ("random", "voi", "learned")


def build_questions(table: pd.DataFrame) -> List[Question]:
    """
    Question list of an attribute table.

    Two-valued attributes get one question on their canonical value ('true'
    for true/false columns, otherwise the value met first). Multi-valued
    attributes get one question per value, in order of first appearance.
    """
    questions: List[Question] = []
    for attribute in table.columns:
        values = list(dict.fromkeys(table[attribute]))
        if set(values) == {"true", "false"}:
            questions.append((attribute, "true"))
        elif len(values) <= 2:
            questions.append((attribute, values[0]))
        else:
            questions.extend((attribute, value) for value in values)
    return questions


class Ontology:
    """
    Individuals described by categorical attributes, with the yes/no question list.

    Args:
        table: One row per individual, indexed by id, one column per attribute
        questions: Question list (built from the table by default)
    """

    def __init__(self, table: pd.DataFrame, questions: Optional[Sequence[Question]] = None):
        if table.index.has_duplicates:
            raise ValidationError("Individual ids must be unique")
        if table.isna().any().any():
            raise ValidationError("Every individual needs a value for every attribute")
        self.table = table.astype(str)
        self.questions: Tuple[Question, ...] = tuple(questions or build_questions(self.table))
        for attribute, _ in self.questions:
            if attribute not in self.table.columns:
                raise ValidationError(f"Question on unknown attribute {attribute!r}")
        # truth[q, s]: does individual s satisfy question q
        self.truth = np.array(
            [(self.table[attribute] == value).to_numpy() for attribute, value in self.questions],
            dtype=bool,
        ).reshape(len(self.questions), len(self.table))

    @classmethod
    def load(cls, file_path=ONTOLOGY_FILE, validate: bool = True) -> "Ontology":
        """Read an ontology CSV with an 'id' column."""
        table = pd.read_csv(file_path, dtype=str, comment="#")
        if "id" not in table.columns:
            raise ValidationError(f"{file_path} has no 'id' column")
        ontology = cls(table.set_index("id"))
        if validate:
            ontology.validate()
        logger.debug(f"Loaded ontology from {file_path}: {ontology.n_individuals} individuals")
        return ontology

    def validate(self, n_individuals: int = N_INDIVIDUALS, n_questions: int = N_QUESTIONS):
        if self.n_individuals != n_individuals:
            raise ValidationError(
                f"Ontology has {self.n_individuals} individuals, expected {n_individuals}"
            )
        if self.n_questions != n_questions:
            raise ValidationError(f"Ontology has {self.n_questions} questions, expected {n_questions}")

    @property
    def individuals(self) -> Tuple[str, ...]:
        return tuple(self.table.index)

    @property
    def n_individuals(self) -> int:
        return len(self.table)

    @property
    def n_questions(self) -> int:
        return len(self.questions)

    def index(self, name: str) -> int:
        return self.individuals.index(name)

    def question_index(self, attribute: str, value: str) -> int:
        try:
            return self.questions.index((attribute, value))
        except ValueError:
            raise ArgumentError(f"No question {attribute}={value}") from None

    def label(self, q: int) -> str:
        attribute, value = self.questions[q]
        return f"{attribute}={value}"

    def subset(self, names: Sequence[str]) -> "Ontology":
        """Sub-ontology over `names` that keeps the full question list."""
        return Ontology(self.table.loc[list(names)], self.questions)


def uniform_belief(ontology: Ontology) -> np.ndarray:
    return np.full(ontology.n_individuals, 1.0 / ontology.n_individuals)


def _check_belief(b: np.ndarray, ontology: Ontology) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (ontology.n_individuals,):
        raise ArgumentError(f"Belief over {b.shape} for {ontology.n_individuals} individuals")
    if np.any(b < 0) or abs(b.sum() - 1.0) > BELIEF_TOL:
        raise ArgumentError("Belief must be non-negative and sum to 1")
    return b


def _check_accuracy(accuracy: float):
    if not 0.5 < accuracy <= 1.0:
        raise ArgumentError(f"accuracy must be in (0.5, 1], got {accuracy}")


def likelihoods(ontology: Ontology, accuracy: float) -> np.ndarray:
    """p(yes | s, q) for every question and individual."""
    return np.where(ontology.truth, accuracy, 1.0 - accuracy)


def answer(ontology: Ontology, hidden: int, q: int, accuracy: float, ctx: EpisodeContext) -> bool:
    """Truthful answer for `hidden`, flipped with probability 1 - accuracy."""
    _check_accuracy(accuracy)
    truthful = bool(ontology.truth[q, hidden])
    correct = ctx.flip(ctx.next_address("answer"), accuracy)
    return truthful if correct else not truthful


def belief_update(b: np.ndarray, q: int, response: bool, accuracy: float,
                  ontology: Ontology) -> np.ndarray:
    """
    Exact Bayes update of the belief after one answer.

    Args:
        b: Current belief
        q: Question index
        response: Answer received
        accuracy: Probability that an answer is truthful
        ontology: Ontology

    Returns:
        Posterior belief
    """
    b = _check_belief(b, ontology)
    _check_accuracy(accuracy)
    matches = ontology.truth[q] == bool(response)
    posterior = b * np.where(matches, accuracy, 1.0 - accuracy)
    total = posterior.sum()
    if total <= 0:
        raise DegenerateBeliefError(
            f"Answer {response} to {ontology.label(q)} contradicts every remaining candidate"
        )
    return posterior / total


def voi_values(b: np.ndarray, ontology: Ontology, accuracy: float) -> np.ndarray:
    """
    Myopic value of information of every question.

    E_r[max_s b'(s)] - max_s b(s); since b'(s) = b(s) l(r|s) / p(r), the
    expectation is the sum over both responses of max_s b(s) l(r|s).
    """
    b = _check_belief(b, ontology)
    _check_accuracy(accuracy)
    yes = likelihoods(ontology, accuracy) * b
    no = (1.0 - likelihoods(ontology, accuracy)) * b
    return yes.max(axis=1) + no.max(axis=1) - b.max()


def voi_choose(b: np.ndarray, ontology: Ontology, accuracy: float) -> int:
    """Question of highest VOI; near-ties go to the smallest index."""
    values = voi_values(b, ontology, accuracy)
    return int(np.flatnonzero(values >= values.max() - TIE_TOL)[0])


@dataclass(frozen=True)
class LearnedSettings:
    """
    Priors of the learned question policy.

    Args:
        a_sigma: Initial scale of the log-weights z_qs
        learn_a_sigma: Learn the scale of every z_qs as well as its mean
        learn_gamma_sigma: Learn the scale of the discount logit
    """

    a_sigma: float = 1.0
    learn_a_sigma: bool = False
    learn_gamma_sigma: bool = True

    def __post_init__(self):
        if not self.a_sigma > 0:
            raise ArgumentError(f"a_sigma must be positive, got {self.a_sigma}")


def discounted_weights(weights: np.ndarray, gamma: float, b: np.ndarray,
                       hist: np.ndarray) -> np.ndarray:
    """v_q = gamma^n_q (A b)_q."""
    return np.power(gamma, hist) * (weights @ b)


def policy_parameters(ctx: EpisodeContext, ontology: Ontology,
                      settings: LearnedSettings) -> Tuple[np.ndarray, float]:
    """
    Weight matrix A and discount gamma of the episode, drawn once.

    A_qs = exp(z_qs) with z_qs Normal at ("A", q, s); gamma = logistic(g)
    with g Normal at ("gamma",).
    """
    cached = ctx.scratch.get("guesswho")
    if cached is not None:
        return cached
    a_family = DistFamily.normal(learn_scale=settings.learn_a_sigma)
    a_init = (0.0, math.log(settings.a_sigma))
    z = np.array([
        [ctx.memo(Address.of("A", q, s), a_family, a_init) for s in range(ontology.n_individuals)]
        for q in range(ontology.n_questions)
    ])
    g = ctx.memo(Address.of("gamma"), DistFamily.normal(settings.learn_gamma_sigma), (0.0, 0.0))
    cached = (np.exp(z), float(expit(g)))
    ctx.scratch["guesswho"] = cached
    return cached


def learned_choose(ctx: EpisodeContext, b: np.ndarray, hist: np.ndarray, ontology: Ontology,
                   settings: LearnedSettings = LearnedSettings()) -> int:
    """Question drawn with probability proportional to v_q."""
    weights, gamma = policy_parameters(ctx, ontology, settings)
    return ctx.choose(ctx.next_address("question"), discounted_weights(weights, gamma, b, hist))


def random_choose(ctx: EpisodeContext, n_questions: int) -> int:
    """Uniform question; repeats allowed."""
    return ctx.choose(ctx.next_address("question"), np.ones(n_questions))


class QuestionPolicy:
    """One of the question policies: 'random', 'voi' or 'learned'."""

    def __init__(self, name: str, ontology: Ontology, accuracy: float,
                 settings: Optional[LearnedSettings] = None):
        if name not in POLICIES:
            raise ArgumentError(f"Unknown Guess Who policy {name!r}")
        self.name = name
        self.ontology = ontology
        self.accuracy = accuracy
        self.settings = settings or LearnedSettings()

    def __call__(self, ctx: EpisodeContext, b: np.ndarray, hist: np.ndarray) -> int:
        if self.name == "voi":
            return voi_choose(b, self.ontology, self.accuracy)
        if self.name == "learned":
            return learned_choose(ctx, b, hist, self.ontology, self.settings)
        return random_choose(ctx, self.ontology.n_questions)


def episode(policy: QuestionPolicy, hidden: int, budget: int, accuracy: float,
            ctx: EpisodeContext, ontology: Ontology) -> float:
    """
    Ask `budget` questions, then guess among the most probable candidates.

    Returns:
        1.0 if the guess is the hidden individual, else 0.0
    """
    if budget < 0:
        raise ArgumentError(f"Question budget must be >= 0, got {budget}")
    b = uniform_belief(ontology)
    hist = np.zeros(ontology.n_questions, dtype=int)
    asked = []
    for _ in range(budget):
        ctx.tick()
        q = policy(ctx, b, hist)
        response = answer(ontology, hidden, q, accuracy, ctx)
        b = belief_update(b, q, response, accuracy, ontology)
        hist[q] += 1
        asked.append(q)

    best = np.flatnonzero(b >= b.max() - TIE_TOL)
    guess = int(best[ctx.choose(Address.of("guess"), np.ones(len(best)))])
    ctx.annotate(questions=asked, guess=guess, hidden=int(hidden), candidates=len(best))
    return 1.0 if guess == hidden else 0.0


class GuessWhoWorld:
    """Hidden individual drawn uniformly."""

    def __init__(self, ontology: Ontology, budget: int):
        self.ontology = ontology
        self.horizon = budget + 1

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.ontology.n_individuals))


class GuessWhoProgram:
    """Guess Who episode under a named question policy."""

    def __init__(self, ontology: Ontology, budget: int, accuracy: float = 0.9,
                 policy: str = "learned", settings: Optional[LearnedSettings] = None):
        if budget < 0:
            raise ArgumentError(f"Question budget must be >= 0, got {budget}")
        _check_accuracy(accuracy)
        self.ontology = ontology
        self.budget = budget
        self.accuracy = accuracy
        self.policy = QuestionPolicy(policy, ontology, accuracy, settings)

    def __call__(self, ctx: EpisodeContext, hidden: int) -> float:
        return episode(self.policy, hidden, self.budget, self.accuracy, ctx, self.ontology)


def reward_by_budget(ontology: Ontology, policies: Sequence[str], budgets: Sequence[int],
                     store: HyperStore, accuracy: float = 0.9, episodes: int = 1000,
                     seed: int = 0, workers: int = 1,
                     settings: Optional[LearnedSettings] = None) -> pd.DataFrame:
    """
    Mean test reward of each policy as a function of the question budget.

    Returns:
        DataFrame with columns policy, T, mean_reward, stderr
    """
    rows = []
    for policy in policies:
        for budget in budgets:
            program = GuessWhoProgram(ontology, int(budget), accuracy, policy, settings)
            result = evaluate(program, GuessWhoWorld(ontology, int(budget)), store,
                              episodes, seed, workers)
            rows.append({"policy": policy, "T": int(budget), "mean_reward": result.mean,
                         "stderr": result.stderr})
    return pd.DataFrame(rows, columns=["policy", "T", "mean_reward", "stderr"])
