"""Result tables written by the commands."""

from typing import Dict, Mapping, Tuple

import numpy as np
import pandas as pd

from src.core.trace import HyperStore
from src.domains.ctp import edge_frequencies
from src.domains.guesswho import reward_by_budget
from src.domains.rocksample import transition_frequencies
from src.models.predict_model import EvaluationResult
from src.models.train_model import reward_stats

CONVERGENCE_MIN_STEPS = 100


def episodes_table(results: Mapping[str, EvaluationResult]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({"policy": policy, "episode": np.arange(result.episodes),
                      "reward": result.rewards})
        for policy, result in results.items()
    ]
    return pd.concat(frames, ignore_index=True)


def summary_table(results: Mapping[str, EvaluationResult]) -> pd.DataFrame:
    rows = [{"policy": policy, **result.summary()} for policy, result in results.items()]
    return pd.DataFrame(rows, columns=["policy", "episodes", "mean_reward", "stderr"])


def _per_policy(results: Mapping[str, EvaluationResult], report) -> pd.DataFrame:
    frames = []
    for policy, result in results.items():
        table = report(result.traces)
        table.insert(0, "policy", policy)
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


def domain_tables(spec, domain, results: Mapping[str, EvaluationResult],
                  store: HyperStore) -> Dict[str, pd.DataFrame]:
    """
    Domain-specific reports of an evaluation.

    CTP gets edge traversal frequencies, RockSample anchor transitions and
    Guess Who the mean reward per question budget.
    """
    if spec.domain == "ctp":
        return {"edge_frequencies.csv": _per_policy(results, edge_frequencies)}
    if spec.domain == "rocksample":
        return {"transitions.csv": _per_policy(results, transition_frequencies)}
    table = reward_by_budget(
        domain.instance,
        list(results),
        [int(t) for t in spec.settings["budgets"]],
        store,
        accuracy=float(spec.settings["accuracy"]),
        episodes=spec.episodes,
        seed=spec.seed,
        workers=spec.workers,
        settings=domain.programs["learned"].policy.settings,
    )
    return {"reward_by_budget.csv": table}


def convergence_table(sweep: pd.DataFrame, tolerance: float = 0.1,
                      min_steps: int = CONVERGENCE_MIN_STEPS) -> Tuple[pd.DataFrame, bool]:
    """
    Summarize a sweep per policy and step count.

    A step count has converged when every successful restart lies within
    `tolerance` (relative) of the restarts' median.

    Returns:
        (table with columns policy, steps, restarts, mean_reward, stderr,
        converged; True when the sweep has step counts above `min_steps` and
        every one of them converged)
    """
    rows = []
    for (policy, steps), group in sweep.groupby(["policy", "steps"], sort=False):
        rewards = group.loc[group["status"] == "ok", "mean_reward"].to_numpy(dtype=float)
        if len(rewards):
            mean, stderr = reward_stats(rewards)
            median = float(np.median(rewards))
            converged = bool(np.all(np.abs(rewards - median) <= tolerance * abs(median)))
        else:
            mean, stderr, converged = np.nan, np.nan, False
        rows.append({"policy": policy, "steps": int(steps), "restarts": len(rewards),
                     "mean_reward": mean, "stderr": stderr, "converged": converged})
    table = pd.DataFrame(
        rows, columns=["policy", "steps", "restarts", "mean_reward", "stderr", "converged"]
    )
    late = table[table["steps"] > min_steps]
    return table, bool(len(late)) and bool(late["converged"].all())
