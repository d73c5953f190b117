"""Differential-evolution engine with a step interface for policy control.

A `DERun` advances one trial vector at a time: `observe()` draws the five
candidate indices and returns the state vector for the current parent,
`step(strategy)` applies mutation, binomial crossover, bound repair,
evaluation and greedy selection, and reports the quantities reward
functions need.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from deopt.bench import ObjectiveFunction
from deopt.features import (
    MetricWindow,
    OperatorHistory,
    RunState,
    compute_state,
    record_application,
)


class Strategy(IntEnum):
    """The four mutation strategies; ordinals are frozen (Q-output indexing)."""

    RAND1 = 0
    RAND2 = 1
    RAND_TO_BEST2 = 2
    CURR_TO_RAND1 = 3


N_STRATEGIES = len(Strategy)


@dataclass
class DEParams:
    F: float = 0.5
    CR: float = 1.0
    NP: int = 100
    budget: int = 10_000
    stop_tol: float = 1e-8

    def __post_init__(self):
        if self.NP < 6:
            raise ValueError("NP must be >= 6 (five distinct non-parent indices)")
        if not 0.0 <= self.CR <= 1.0:
            raise ValueError("CR must lie in [0, 1]")
        if self.budget <= 0:
            raise ValueError("evaluation budget must be positive")


class Population:
    """NP solution vectors with their fitness and the best member's index."""

    def __init__(self, members: np.ndarray, fitness: np.ndarray):
        self.members = members
        self.fitness = fitness
        self.best_index = int(np.argmin(fitness))

    @classmethod
    def initialize(
        cls, func: ObjectiveFunction, NP: int, rng: np.random.Generator
    ) -> "Population":
        if NP < 6:
            raise ValueError("NP must be >= 6")
        members = rng.uniform(func.lower, func.upper, size=(NP, func.dim))
        fitness = np.array([func.evaluate(x) for x in members])
        return cls(members, fitness)

    def replace(self, i: int, x: np.ndarray, f: float) -> None:
        self.members[i] = x
        self.fitness[i] = f
        fb = self.fitness[self.best_index]
        # keep best_index = argmin with lowest-index tie-break
        if f < fb or (f == fb and i < self.best_index):
            self.best_index = i


def draw_indices(NP: int, i: int, rng: np.random.Generator) -> np.ndarray:
    """Five distinct indices from [0, NP), all different from `i`."""
    # Rejection sampling; much cheaper than choice(replace=False) and
    # collisions are rare for NP >= 6.
    while True:
        r = rng.integers(0, NP - 1, size=5)
        a, b, c, d, e = r.tolist()
        if a != b and a != c and a != d and a != e and b != c and b != d \
                and b != e and c != d and c != e and d != e:
            break
    r[r >= i] += 1
    return r


def _median(values: np.ndarray) -> float:
    n = values.size
    k = n // 2
    if n % 2:
        return float(np.partition(values, k)[k])
    part = np.partition(values, (k - 1, k))
    return float(0.5 * (part[k - 1] + part[k]))


def mutate(
    strategy: Strategy,
    pop: Population,
    i: int,
    r: np.ndarray,
    F: float,
) -> np.ndarray:
    x = pop.members
    if strategy == Strategy.RAND1:
        return x[r[0]] + F * (x[r[1]] - x[r[2]])
    if strategy == Strategy.RAND2:
        return x[r[0]] + F * (x[r[1]] - x[r[2]] + x[r[3]] - x[r[4]])
    if strategy == Strategy.RAND_TO_BEST2:
        return x[r[0]] + F * (
            x[pop.best_index] - x[r[0]] + x[r[1]] - x[r[2]] + x[r[3]] - x[r[4]]
        )
    return x[i] + F * (x[r[0]] - x[i] + x[r[1]] - x[r[2]])


def crossover(
    parent: np.ndarray, donor: np.ndarray, CR: float, rng: np.random.Generator
) -> np.ndarray:
    """Binomial crossover; one forced index always takes the donor value."""
    if CR >= 1.0:
        return donor.copy()
    dim = parent.shape[0]
    mask = rng.random(dim) < CR
    mask[rng.integers(dim)] = True
    return np.where(mask, donor, parent)


def repair(trial: np.ndarray, func: ObjectiveFunction) -> np.ndarray:
    return np.clip(trial, func.lower, func.upper)


@dataclass
class StepResult:
    f_parent: float
    f_trial: float
    f_bsf_before: float
    success: bool
    done: bool


class DERun:
    """One DE run on one function, driven step by step by a policy.

    `track_features` may be disabled for policies that never look at the
    state (fixed or uniform-random selection); the run then skips the
    operator-history bookkeeping.
    """

    def __init__(
        self,
        func: ObjectiveFunction,
        params: DEParams,
        rng: np.random.Generator,
        dim_max: int | None = None,
        gen_history: int = 10,
        window_size: int = 50,
        track_features: bool = True,
    ):
        if params.budget < params.NP:
            raise ValueError("budget below the NP initialisation evaluations")
        self.func = func
        self.params = params
        self.rng = rng
        self.track_features = track_features
        self.pop = Population.initialize(func, params.NP, rng)
        self.state = RunState(
            f_bsf=float(self.pop.fitness.min()),
            f_wsf=float(self.pop.fitness.max()),
            x_bsf=self.pop.members[self.pop.best_index].copy(),
            t=params.NP,
            budget=params.budget,
            stagcount=0,
            dim_f=func.dim,
            dim_max=dim_max if dim_max is not None else func.dim,
            dist_max=float(np.linalg.norm(func.upper - func.lower)),
        )
        self.hist = OperatorHistory(gen=gen_history)
        self.window = MetricWindow(capacity=window_size)
        self.cursor = 0
        self.steps_in_generation = 0
        self._pending_r: np.ndarray | None = None

    @property
    def done(self) -> bool:
        if self.state.t >= self.params.budget:
            return True
        return (
            self.func.f_optimum is not None
            and self.state.f_bsf - self.func.f_optimum < self.params.stop_tol
        )

    @property
    def final_error(self) -> float:
        """Best-so-far fitness, as error versus the optimum when known."""
        if self.func.f_optimum is None:
            return self.state.f_bsf
        return self.state.f_bsf - self.func.f_optimum

    def _indices(self) -> np.ndarray:
        if self._pending_r is None:
            self._pending_r = draw_indices(self.params.NP, self.cursor, self.rng)
        return self._pending_r

    def observe(self) -> np.ndarray:
        """State vector for the current parent; fixes the candidate indices."""
        return compute_state(
            self.state,
            self.pop.members,
            self.pop.fitness,
            self.pop.best_index,
            self.cursor,
            self._indices(),
            self.hist,
            self.window,
        )

    def step(self, action: Strategy) -> StepResult:
        if self.done:
            raise RuntimeError("evaluation budget exhausted")
        i = self.cursor
        r = self._indices()
        self._pending_r = None

        donor = mutate(Strategy(action), self.pop, i, r, self.params.F)
        trial = crossover(self.pop.members[i], donor, self.params.CR, self.rng)
        trial = repair(trial, self.func)
        f_trial = self.func.evaluate(trial)
        self.state.t += 1

        f_parent = float(self.pop.fitness[i])
        f_bsf_before = self.state.f_bsf
        if self.track_features:
            record_application(
                self.hist,
                self.window,
                int(action),
                f_parent,
                f_trial,
                float(self.pop.fitness[self.pop.best_index]),
                f_bsf_before,
                _median(self.pop.fitness),
            )

        if f_trial < self.state.f_bsf:
            self.state.f_bsf = f_trial
            self.state.x_bsf = trial.copy()
            self.state.stagcount = 0
        else:
            self.state.stagcount += 1
        if f_trial > self.state.f_wsf:
            self.state.f_wsf = f_trial

        success = f_trial < f_parent
        if success:
            self.pop.replace(i, trial, f_trial)

        self.cursor = (self.cursor + 1) % self.params.NP
        self.steps_in_generation += 1
        if self.track_features and self.steps_in_generation % self.params.NP == 0:
            self.hist.rotate()

        return StepResult(
            f_parent=f_parent,
            f_trial=f_trial,
            f_bsf_before=f_bsf_before,
            success=success,
            done=self.done,
        )
