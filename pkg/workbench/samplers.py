import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import CARTPOLE_GRAD_STEPS
from replay_buffer import look_back_window, look_forward_window
from sum_tree import SumTree

logger = logging.getLogger(__name__)

STRATEGIES = ("uer", "rer", "oer", "per", "ier")
SCORED_STRATEGIES = ("oer", "per", "ier")


class SamplerSpec(BaseModel):
    """Declarative sampling configuration for one experiment."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy: Literal["uer", "rer", "oer", "per", "ier"]
    batch_size: int = Field(64, ge=1)
    # 0 turns a run into pure data collection
    grad_steps: int = Field(CARTPOLE_GRAD_STEPS, ge=0)
    mixing_p: float = Field(0.0, ge=0.0, le=1.0)
    pivot_mode: Literal["td_top", "uniform"] = "td_top"
    fill_mode: Literal["look_back", "look_forward", "uniform"] = "look_back"
    per_alpha: float = Field(0.4, ge=0.0)
    per_beta: float = Field(0.6, ge=0.0, le=1.0)
    per_epsilon: float = Field(1e-6, gt=0.0)

    @property
    def needs_scores(self) -> bool:
        return self.strategy in SCORED_STRATEGIES

    @property
    def pivot_batches(self) -> int:
        """Number of g in [0, G) with g < (1 - p) G, i.e. ceil((1 - p) G)."""
        return min(self.grad_steps, math.ceil((1.0 - self.mixing_p) * self.grad_steps - 1e-9))

    @property
    def label(self) -> str:
        if self.strategy != "ier":
            return self.strategy
        name = "ier(f)" if self.fill_mode == "look_forward" else "ier"
        if self.pivot_mode == "uniform":
            name += "+uniform-pivot"
        if self.fill_mode == "uniform":
            name += "+uniform-fill"
        if self.mixing_p > 0:
            name += f"(p={self.mixing_p:g})"
        return name


@dataclass
class EpochPlan:
    """Index batches for one epoch, one list per gradient step."""

    batches: list = field(default_factory=list)
    pivot_indices: list = field(default_factory=list)
    weights: list = None

    def __len__(self) -> int:
        return len(self.batches)

    def batch_weights(self, g: int):
        return None if self.weights is None else self.weights[g]


@dataclass
class RerCursor:
    """Reverse-sweep position; None means "end of the buffer"."""

    position: int = None


def _require_nonempty(buf_len: int):
    if buf_len < 1:
        raise ValueError("empty buffer")


def rank_descending(scores) -> np.ndarray:
    """Indices ordered by descending score, ties toward the larger (more recent) index."""
    scores = np.asarray(scores, dtype=np.float64)
    positions = np.arange(len(scores))
    return np.lexsort((-positions, -scores))


def uniform_batch(buf_len: int, batch_size: int, rng: np.random.Generator) -> list:
    """B indices without replacement, with replacement only when the buffer is smaller than B."""
    return rng.choice(buf_len, size=batch_size, replace=buf_len < batch_size).tolist()


def _uniform_fill(pivot: int, buf_len: int, batch_size: int, rng: np.random.Generator) -> list:
    others = buf_len - 1
    need = batch_size - 1
    if need == 0:
        return [pivot]
    if others == 0:
        return [pivot] * batch_size
    fill = rng.choice(others, size=need, replace=others < need)
    # skip over the pivot so fill indices cover every other buffer slot
    fill = np.where(fill >= pivot, fill + 1, fill)
    return [pivot] + np.sort(fill).tolist()


def plan_ier(scores, buf_len: int, spec: SamplerSpec, rng: np.random.Generator) -> EpochPlan:
    """Pivot-anchored blocks for the first ceil((1-p)G) steps, uniform batches after."""
    _require_nonempty(buf_len)
    if scores is not None and len(scores) != buf_len:
        raise ValueError(f"score vector has {len(scores)} entries for buffer of length {buf_len}")

    B, G = spec.batch_size, spec.grad_steps
    n_pivot = spec.pivot_batches

    if spec.pivot_mode == "td_top":
        ranking = rank_descending(scores)
        # cycles through the ranking when the buffer holds fewer than G points
        pivots = ranking[np.arange(n_pivot) % buf_len]
    else:
        pivots = rng.integers(0, buf_len, size=n_pivot)

    batches = []
    for pivot in pivots.tolist():
        if spec.fill_mode == "look_back":
            batches.append(list(look_back_window(pivot, B)))
        elif spec.fill_mode == "look_forward":
            batches.append(list(look_forward_window(pivot, B, buf_len)))
        else:
            batches.append(_uniform_fill(pivot, buf_len, B, rng))

    for _ in range(G - n_pivot):
        batches.append(uniform_batch(buf_len, B, rng))

    return EpochPlan(batches=batches, pivot_indices=pivots.tolist())


def plan_uer(buf_len: int, spec: SamplerSpec, rng: np.random.Generator) -> EpochPlan:
    _require_nonempty(buf_len)
    return EpochPlan(batches=[uniform_batch(buf_len, spec.batch_size, rng) for _ in range(spec.grad_steps)])


def plan_rer(cursor: RerCursor, buf_len: int, spec: SamplerSpec) -> EpochPlan:
    """Consecutive blocks walking backward from the cursor, wrapping to the newest block.

    Each step emits [P-B, P) and then moves P down by B, so a fresh cursor
    starts with the newest B transitions.
    """
    B = spec.batch_size
    if buf_len < B:
        raise ValueError(f"buffer of length {buf_len} is shorter than batch size {B}")

    position = buf_len if cursor.position is None else min(cursor.position, buf_len)
    batches = []
    for _ in range(spec.grad_steps):
        if position - B < 0:
            position = buf_len
        batches.append(list(range(position - B, position)))
        position -= B

    cursor.position = position
    return EpochPlan(batches=batches)


def plan_oer(scores, buf_len: int, spec: SamplerSpec) -> EpochPlan:
    """The top B*G scores split into G consecutive groups, highest scores first.

    When fewer than B*G indices are available the groups are balanced rather
    than filled B at a time: 10 indices with B=4, G=3 give sizes [4, 3, 3], not
    [4, 4, 2]. Every group stays within B and none is empty while len >= G.
    """
    _require_nonempty(buf_len)
    G = spec.grad_steps
    if G == 0:
        return EpochPlan()

    ranking = rank_descending(scores)
    top = ranking[:min(spec.batch_size * G, buf_len)]
    if len(top) >= G:
        groups = [chunk.tolist() for chunk in np.array_split(top, G)]
    else:
        groups = [[int(top[g % len(top)])] for g in range(G)]
    return EpochPlan(batches=groups)


def per_priority(td_abs, spec: SamplerSpec):
    return (np.asarray(td_abs, dtype=np.float64) + spec.per_epsilon) ** spec.per_alpha


def per_update(tree: SumTree, index: int, td_abs: float, spec: SamplerSpec):
    tree.update(index, float(per_priority(td_abs, spec)))


def per_weights(probabilities, buf_len: int, beta: float) -> np.ndarray:
    """Importance weights (N * P(i))^-beta scaled so the batch maximum is 1."""
    raw = (buf_len * np.asarray(probabilities, dtype=np.float64)) ** (-beta)
    return raw / raw.max()


def plan_per(tree: SumTree, buf_len: int, spec: SamplerSpec, rng: np.random.Generator) -> EpochPlan:
    """Stratified proportional draws: one uniform draw in each of B equal mass segments."""
    total = tree.total()
    if not total > 0:
        raise ValueError("zero total mass")

    B = spec.batch_size
    segment = total / B
    leaves = tree.leaves()
    batches, weights = [], []
    for _ in range(spec.grad_steps):
        masses = (np.arange(B) + rng.random(B)) * segment
        indices = np.minimum(tree.find(masses), buf_len - 1)
        probabilities = leaves[indices] / total
        batches.append(indices.tolist())
        weights.append(per_weights(probabilities, buf_len, spec.per_beta))
    return EpochPlan(batches=batches, weights=weights)


def plan_epoch(spec: SamplerSpec, buf_len: int, rng: np.random.Generator,
               scores=None, cursor: RerCursor = None, tree: SumTree = None) -> EpochPlan:
    """Dispatch to the planner for spec.strategy."""
    if spec.grad_steps == 0:
        return EpochPlan()

    if spec.strategy == "uer":
        return plan_uer(buf_len, spec, rng)
    if spec.strategy == "rer":
        return plan_rer(cursor, buf_len, spec)
    if spec.strategy == "oer":
        return plan_oer(scores, buf_len, spec)
    if spec.strategy == "per":
        return plan_per(tree, buf_len, spec, rng)
    return plan_ier(scores, buf_len, spec, rng)
