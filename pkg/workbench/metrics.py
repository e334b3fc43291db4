import itertools
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import binom

from config import TOP_K

logger = logging.getLogger(__name__)

# Scores closer than this count as a tie, and ties count against the metric
TIE_TOLERANCE = 1e-9


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over `window` points, growing from the first element until the window is full."""
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise ValueError("series must be nonempty")

    out = np.empty_like(values)
    head = min(window, len(values))
    out[:head] = np.cumsum(values[:head]) / np.arange(1, head + 1)
    if len(values) > window:
        out[window:] = np.lib.stride_tricks.sliding_window_view(values, window).mean(axis=1)[1:]
    return out


def topk_final(final_values, k: int) -> float:
    """Mean of the k largest values."""
    values = np.sort(np.asarray(final_values, dtype=np.float64))
    if not 1 <= k <= len(values):
        raise ValueError(f"k must lie in [1, {len(values)}], got {k}")
    return float(values[-k:].mean())


class FaultModel(BaseModel):
    """Algorithms whose runs either return their nominal value or fault to 0."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # (success_value, fault_probability) per algorithm
    algorithms: tuple[tuple[float, float], ...] = ((0.9, 0.5), (1.0, 0.5), (0.8, 0.5))
    names: tuple[str, ...] = ("A", "B", "C")
    gaussian_sigma: float = Field(0.0, ge=0.0)
    environments: int = Field(20, ge=1)
    seeds_per_env: int = Field(10, ge=1)
    trials: int = Field(500, ge=1)
    k: int = Field(TOP_K, ge=1)

    @model_validator(mode="after")
    def check_algorithms(self):
        if len(self.algorithms) < 2:
            raise ValueError("need at least two algorithms to compare")
        if len(self.names) != len(self.algorithms):
            raise ValueError("names and algorithms must have equal length")
        for _, q in self.algorithms:
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"fault probability {q} outside [0, 1]")
        values = sorted(v for v, _ in self.algorithms)
        if values[-1] == values[-2]:
            raise ValueError("exactly one algorithm must have the largest success value")
        if self.k > self.seeds_per_env:
            raise ValueError(f"k={self.k} exceeds seeds_per_env={self.seeds_per_env}")
        return self

    @property
    def ground_truth(self) -> int:
        return int(np.argmax([v for v, _ in self.algorithms]))


def _topk_scores(outcomes: np.ndarray, k: int) -> np.ndarray:
    return np.sort(outcomes, axis=-1)[..., -k:].mean(axis=-1)


def _truth_wins(scores: np.ndarray, truth: int) -> np.ndarray:
    others = np.delete(scores, truth, axis=-1).max(axis=-1)
    return scores[..., truth] > others + TIE_TOLERANCE


def fault_sim_outcomes(model: FaultModel, rng: np.random.Generator) -> np.ndarray:
    """Outcome array of shape (trials, environments, algorithms, seeds_per_env)."""
    values = np.array([v for v, _ in model.algorithms])[:, None]
    faults = np.array([q for _, q in model.algorithms])[:, None]
    shape = (model.trials, model.environments, len(model.algorithms), model.seeds_per_env)

    outcomes = np.where(rng.random(shape) < faults, 0.0, values)
    if model.gaussian_sigma > 0:
        outcomes = outcomes + rng.normal(0.0, model.gaussian_sigma, size=shape)
    return outcomes


def fault_sim_decisions(model: FaultModel, outcomes: np.ndarray) -> tuple:
    """Per (trial, environment) cell: does the ground truth win under Top-K, and under the average?"""
    truth = model.ground_truth
    topk = _truth_wins(_topk_scores(outcomes, model.k), truth)
    # the average is the Top-K score with k = all seeds
    average = _truth_wins(_topk_scores(outcomes, model.seeds_per_env), truth)
    return topk, average


def fault_sim(model: FaultModel, rng: np.random.Generator) -> tuple:
    """
    Monte-Carlo accuracy of the Top-K and average metrics at picking the best algorithm.

    Args:
        model: Fault model and simulation sizes
        rng: Generator for outcome and noise draws

    Returns:
        (topk_accuracy, avg_accuracy) as fractions of (trial, environment) cells
    """
    topk, average = fault_sim_decisions(model, fault_sim_outcomes(model, rng))
    topk_accuracy, avg_accuracy = float(topk.mean()), float(average.mean())
    logger.info(
        f"Fault simulation: {model.trials} trials x {model.environments} envs, k={model.k}, "
        f"sigma={model.gaussian_sigma}: top-k {topk_accuracy:.4f}, average {avg_accuracy:.4f}"
    )
    return topk_accuracy, avg_accuracy


def analytic_fault_accuracy(model: FaultModel) -> tuple:
    """Exact noise-free accuracies by enumerating every algorithm's success count."""
    if model.gaussian_sigma > 0:
        raise ValueError("exact accuracy is only available without gaussian noise")

    n, k, truth = model.seeds_per_env, model.k, model.ground_truth
    counts = np.arange(n + 1)
    pmfs = [binom.pmf(counts, n, 1.0 - q) for _, q in model.algorithms]
    values = [v for v, _ in model.algorithms]

    topk_accuracy = 0.0
    avg_accuracy = 0.0
    for combo in itertools.product(counts, repeat=len(values)):
        probability = np.prod([pmf[c] for pmf, c in zip(pmfs, combo)])
        topk = np.array([v * min(c, k) / k for v, c in zip(values, combo)])
        average = np.array([v * c / n for v, c in zip(values, combo)])
        if _truth_wins(topk, truth):
            topk_accuracy += probability
        if _truth_wins(average, truth):
            avg_accuracy += probability
    return float(topk_accuracy), float(avg_accuracy)
