"""Client selection: attention scores, weighted sampling and the dynamic fraction schedule."""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import AdaflError


class SelectionError(AdaflError, ValueError):
    """Invalid attention update or sampling request."""
    pass


class ScheduleError(SelectionError):
    """Invalid fraction schedule parameters or round index."""
    pass


@dataclass
class AttentionState:
    """Per-client selection probabilities a^(t) for round t (1-based)."""
    scores: np.ndarray
    round: int = 1

    @property
    def num_clients(self) -> int:
        return len(self.scores)

    def entropy(self) -> float:
        p = self.scores[self.scores > 0]
        return float(-np.sum(p * np.log(p)))

    def copy(self) -> 'AttentionState':
        return AttentionState(self.scores.copy(), self.round)


@dataclass(frozen=True)
class SelectionOutcome:
    """Client indices chosen for one round, in draw order."""
    selected: Tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.selected)


def init_attention(sizes: Sequence[int]) -> AttentionState:
    """Initial attention proportional to local dataset sizes."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.ndim != 1 or len(sizes) == 0:
        raise SelectionError("Need one dataset size per client")
    if np.any(sizes <= 0):
        raise SelectionError(f"Dataset sizes must be positive, got minimum {sizes.min()}")
    return AttentionState(sizes / sizes.sum(), round=1)


def update_attention(
    state: AttentionState,
    selected: Sequence[int],
    distances: Sequence[float],
    alpha: float,
) -> AttentionState:
    """Move attention mass among the selected clients towards larger model divergence.

    For selected i: a_i <- alpha*a_i + (1-alpha) * (d_i / sum d) * sum_{k in S} a_k.
    Unselected scores are left untouched, so total mass is conserved. When all
    distances are zero there is no signal and the scores are kept.
    """
    if not 0.0 <= alpha < 1.0:
        raise SelectionError(f"alpha must lie in [0, 1), got {alpha}")

    selected = np.asarray(selected, dtype=np.int64)
    distances = np.asarray(distances, dtype=np.float64)
    if distances.shape != selected.shape:
        raise SelectionError(f"{len(selected)} selected clients but {len(distances)} distances")
    if len(np.unique(selected)) != len(selected):
        raise SelectionError("Selected client indices must be distinct")
    if len(selected) and (selected.min() < 0 or selected.max() >= state.num_clients):
        raise SelectionError(f"Selected indices must lie in [0, {state.num_clients})")
    if not np.all(np.isfinite(distances)) or np.any(distances < 0):
        raise SelectionError("Distances must be finite and non-negative")

    scores = state.scores.copy()
    total_distance = distances.sum()
    if total_distance == 0:
        return AttentionState(scores, state.round + 1)

    selected_mass = scores[selected].sum()
    shares = distances / total_distance
    scores[selected] = alpha * scores[selected] + (1.0 - alpha) * shares * selected_mass
    return AttentionState(scores, state.round + 1)


def sample_clients(state: AttentionState, K: int, rng: np.random.Generator) -> SelectionOutcome:
    """Draw K distinct clients, one at a time, renormalising the remaining mass after each draw."""
    M = state.num_clients
    if not 1 <= K <= M:
        raise SelectionError(f"Cohort size must lie in [1, {M}], got {K}")

    remaining = state.scores.astype(np.float64).copy()
    undrawn = np.ones(M, dtype=bool)
    chosen = []
    for _ in range(K):
        mass = remaining.sum()
        if mass > 0:
            p = remaining / mass
        else:
            # only zero-score clients left: draw uniformly among them
            p = undrawn / undrawn.sum()
        k = int(rng.choice(M, p=p))
        chosen.append(k)
        remaining[k] = 0.0
        undrawn[k] = False
    return SelectionOutcome(tuple(chosen))


@dataclass(frozen=True)
class FractionSchedule:
    """Monotone step function of the selection fraction over rounds 1..T.

    The rounds are split into num_fractions blocks of T // num_fractions
    rounds (the last block absorbs the remainder); the fraction rises by a
    fixed step from gamma_start in the first block to gamma_end in the last.
    """
    gamma_start: float
    gamma_end: float
    num_fractions: int
    total_rounds: int

    @property
    def delta_rounds(self) -> int:
        return self.total_rounds // self.num_fractions

    @property
    def delta_gamma(self) -> float:
        if self.num_fractions == 1:
            return 0.0
        return (self.gamma_end - self.gamma_start) / (self.num_fractions - 1)

    def block_of(self, t: int) -> int:
        """1-based block index of round t; block boundaries belong to the earlier block."""
        if not 1 <= t <= self.total_rounds:
            raise ScheduleError(f"Round {t} outside [1, {self.total_rounds}]")
        return min(math.ceil(t / self.delta_rounds), self.num_fractions)

    def block_value(self, block: int) -> float:
        if block == 1:
            return self.gamma_start
        if block == self.num_fractions:
            return self.gamma_end
        # strip float noise from the fixed-step sum, e.g. 0.1 + 2*0.1
        return round(self.gamma_start + (block - 1) * self.delta_gamma, 12)

    def blocks(self) -> List[Tuple[int, int, float]]:
        """(first_round, last_round, gamma) for every block."""
        out = []
        for b in range(1, self.num_fractions + 1):
            first = (b - 1) * self.delta_rounds + 1
            last = self.total_rounds if b == self.num_fractions else b * self.delta_rounds
            out.append((first, last, self.block_value(b)))
        return out


def build_schedule(gamma_start: float, gamma_end: float, num_fractions: int, total_rounds: int) -> FractionSchedule:
    """Validate the schedule parameters; only non-decreasing schedules are accepted."""
    if not 0.0 < gamma_start < 1.0 or not 0.0 < gamma_end < 1.0:
        raise ScheduleError(f"Fractions must lie in (0, 1), got {gamma_start} and {gamma_end}")
    if gamma_end < gamma_start:
        raise ScheduleError(
            f"Decreasing schedules are not supported (gamma_start={gamma_start} > gamma_end={gamma_end})"
        )
    if num_fractions < 1:
        raise ScheduleError(f"num_fractions must be at least 1, got {num_fractions}")
    if total_rounds < num_fractions:
        raise ScheduleError(f"total_rounds ({total_rounds}) must be at least num_fractions ({num_fractions})")
    if num_fractions == 1 and gamma_start != gamma_end:
        raise ScheduleError(
            f"A single-fraction schedule needs gamma_start == gamma_end, got {gamma_start} and {gamma_end}"
        )
    return FractionSchedule(gamma_start, gamma_end, num_fractions, total_rounds)


def fraction_at(schedule: FractionSchedule, t: int) -> float:
    """Selection fraction for round t."""
    return schedule.block_value(schedule.block_of(t))


def cohort_size(gamma: float, M: int) -> int:
    """K = gamma * M rounded to the nearest integer (halves up), clamped to [1, M]."""
    return max(1, min(M, math.floor(gamma * M + 0.5)))
