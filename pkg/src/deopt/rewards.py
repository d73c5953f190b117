"""Per-application reward definitions for the strategy-selection agent."""

from __future__ import annotations

from enum import Enum


class RewardKind(Enum):
    R1 = "r1"
    R2 = "r2"
    R3 = "r3"


R3_DEFAULT_CAP = 1e6
_R3_EPS = 1e-12


def reward(
    kind: RewardKind,
    f_parent: float,
    f_trial: float,
    f_bsf: float,
    f_optimum: float | None = None,
    r3_cap: float = R3_DEFAULT_CAP,
) -> float:
    """Reward for one strategy application.

    `f_bsf` is the best-so-far fitness before this step's selection. R3
    requires a known `f_optimum`; near the optimum the divergent ratio is
    capped at `r3_cap`.
    """
    if kind is RewardKind.R1:
        return max(f_parent - f_trial, 0.0)
    if kind is RewardKind.R2:
        if f_trial < f_bsf:
            return 10.0
        if f_trial < f_parent:
            return 1.0
        return 0.0
    if f_optimum is None:
        raise ValueError("R3 requires a known optimum fitness")
    gain = f_parent - f_trial
    if gain <= 0:
        return 0.0
    denom = f_trial - f_optimum
    if denom < _R3_EPS:
        return r3_cap
    return min(gain / denom, r3_cap)
