"""The 99-dimensional state vector observed before each strategy choice.

Layout (1-based indices):
  1      parent fitness, relative to the best/worst-so-far range
  2      population mean fitness, same normalisation
  3      population fitness std over its maximum possible value
  4      remaining evaluation budget fraction
  5      problem dimension over the max training dimension
  6      stagnation counter over the evaluation budget
  7-11   distances from the parent to the five drawn candidates
  12     distance from the parent to the best population member
  13-17  fitness differences to the five drawn candidates
  18     fitness difference to the best population member
  19     distance from the parent to the best-so-far solution
  20-35  summed per-generation success rates, per (metric, operator)
  36-51  summed improvements over total applications, per (metric, operator)
  52-67  relative best-improvement change between the last two generations
  68-83  summed best improvements, per (metric, operator)
  84-99  improvement sums over the fixed-size window, per (metric, operator)

Groups 20-99 are normalised across the four operators within each metric;
every component is finite and clamped to [0, 1]. Zero denominators yield 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

N_FEATURES = 99
N_OPERATORS = 4
N_METRICS = 4

# Bumped whenever the layout above changes; stored in checkpoints so a
# trained network is never fed a differently shaped state.
FEATURE_LAYOUT_VERSION = 1


@dataclass
class RunState:
    """Per-run counters shared by the engine and the feature extractor."""

    f_bsf: float
    f_wsf: float
    x_bsf: np.ndarray
    t: int
    budget: int
    stagcount: int
    dim_f: int
    dim_max: int
    dist_max: float


class OperatorHistory:
    """Per-operator success records over the last `gen` generations.

    Each generation record keeps, per operator: the application count, and
    per metric the success count, the summed improvement and the best
    improvement. Only strictly positive improvements count as successes.
    """

    def __init__(self, gen: int = 10):
        self.gen = gen
        self._ntot = np.zeros((gen, N_OPERATORS))
        self._nsucc = np.zeros((gen, N_OPERATORS, N_METRICS))
        self._sum_om = np.zeros((gen, N_OPERATORS, N_METRICS))
        self._best_om = np.zeros((gen, N_OPERATORS, N_METRICS))
        self._len = 1  # records in use; the last one is the current generation

    def __len__(self) -> int:
        return self._len

    def record(self, op: int, om: np.ndarray) -> None:
        _record_kernel(self._ntot, self._nsucc, self._sum_om, self._best_om,
                       self._len, op, om)

    def rotate(self) -> None:
        """Close the current generation record and open an empty one."""
        if self._len < self.gen:
            self._len += 1
        else:
            self._ntot[:-1] = self._ntot[1:]
            self._nsucc[:-1] = self._nsucc[1:]
            self._sum_om[:-1] = self._sum_om[1:]
            self._best_om[:-1] = self._best_om[1:]
        g = self._len - 1
        self._ntot[g] = 0.0
        self._nsucc[g] = 0.0
        self._sum_om[g] = 0.0
        self._best_om[g] = 0.0


class MetricWindow:
    """Fixed-size store of the best improving applications.

    Entries are (operator, four improvement values, offspring fitness) and
    only improving offspring enter. While not full, entries append; at
    capacity a new entry replaces the oldest one of the same operator
    (FIFO per operator), or, if that operator has no entry, the entry with
    the worst (highest) offspring fitness.
    """

    def __init__(self, capacity: int = 50):
        self.capacity = capacity
        self._ops = np.full(capacity, -1, dtype=np.int64)
        self._oms = np.zeros((capacity, N_METRICS))
        self._fu = np.zeros(capacity)
        self._seq = np.zeros(capacity, dtype=np.int64)
        self._size = 0
        self._counter = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, op: int, om: np.ndarray, f_u: float) -> None:
        if self._size < self.capacity:
            slot = self._size
            self._size += 1
        else:
            same = np.flatnonzero(self._ops == op)
            if same.size:
                slot = same[np.argmin(self._seq[same])]
            else:
                slot = int(np.argmax(self._fu[: self._size]))
        self._ops[slot] = op
        self._oms[slot] = np.maximum(om, 0.0)
        self._fu[slot] = f_u
        self._counter += 1
        self._seq[slot] = self._counter

    def sums(self) -> np.ndarray:
        """Per (operator, metric) sums of improvement values in the window.

        Recomputed from the live entries on every call: an incrementally
        maintained total would pick up floating-point residue from evictions
        and never return to an exact zero.
        """
        out = np.zeros((N_OPERATORS, N_METRICS))
        _window_sums_kernel(self._ops, self._oms, self._size, out)
        return out

    def entries(self) -> list[tuple[int, np.ndarray, float]]:
        order = np.argsort(self._seq[: self._size])
        return [
            (int(self._ops[j]), self._oms[j].copy(), float(self._fu[j])) for j in order
        ]


def record_application(
    hist: OperatorHistory,
    win: MetricWindow,
    op: int,
    parent_f: float,
    trial_f: float,
    f_best_parent: float,
    f_bsf: float,
    f_median: float,
) -> np.ndarray:
    """Log one strategy application; returns the four improvement values."""
    om = np.array([parent_f, f_best_parent, f_bsf, f_median]) - trial_f
    hist.record(op, om)
    if om[0] > 0:
        win.insert(op, om, trial_f)
    return om


@njit(cache=True)
def _window_sums_kernel(ops, oms, size, out):
    for k in range(size):
        op = ops[k]
        for m in range(N_METRICS):
            out[op, m] += oms[k, m]


@njit(cache=True)
def _record_kernel(ntot, nsucc, sum_om, best_om, hist_len, op, om):
    g = hist_len - 1
    ntot[g, op] += 1.0
    for m in range(N_METRICS):
        v = om[m]
        if v > 0.0:
            nsucc[g, op, m] += 1.0
            sum_om[g, op, m] += v
            if v > best_om[g, op, m]:
                best_om[g, op, m] = v


@njit(cache=True)
def _state_kernel(
    s, f_bsf, f_wsf, x_bsf, t, budget, stagcount, dim_f, dim_max, dist_max,
    members, fitness, best_index, i, r, ntot, nsucc, sum_om, best_om, g,
    win_sums,
):
    NP = fitness.shape[0]
    dim = members.shape[1]
    f_range = f_wsf - f_bsf
    inv_range = 1.0 / f_range if f_range > 0.0 else 0.0
    inv_dist = 1.0 / dist_max if dist_max > 0.0 else 0.0

    f_i = fitness[i]
    mean_f = 0.0
    sq = 0.0
    for j in range(NP):
        mean_f += fitness[j]
        sq += fitness[j] * fitness[j]
    mean_f /= NP
    s[0] = (f_i - f_bsf) * inv_range
    s[1] = (mean_f - f_bsf) * inv_range
    std_max = f_range / 2.0
    if std_max > 0.0:
        var = sq / NP - mean_f * mean_f
        s[2] = np.sqrt(max(var, 0.0)) / std_max
    else:
        s[2] = 0.0
    s[3] = (budget - t) / budget
    s[4] = dim_f / dim_max
    s[5] = stagcount / budget

    for k in range(5):
        rk = r[k]
        acc = 0.0
        for j in range(dim):
            d = members[i, j] - members[rk, j]
            acc += d * d
        s[6 + k] = np.sqrt(acc) * inv_dist
        s[12 + k] = (f_i - fitness[rk]) * inv_range
    acc = 0.0
    for j in range(dim):
        d = members[i, j] - members[best_index, j]
        acc += d * d
    s[11] = np.sqrt(acc) * inv_dist
    s[17] = (f_i - fitness[best_index]) * inv_range
    acc = 0.0
    for j in range(dim):
        d = members[i, j] - x_bsf[j]
        acc += d * d
    s[18] = np.sqrt(acc) * inv_dist

    # groups: 0 success rates, 1 mean improvements, 2 best-improvement
    # change, 3 summed best improvements, 4 window sums
    block = np.zeros((5, N_OPERATORS, N_METRICS))
    for gg in range(g):
        for op in range(N_OPERATORS):
            nt = ntot[gg, op]
            for m in range(N_METRICS):
                if nt > 0.0:
                    block[0, op, m] += nsucc[gg, op, m] / nt
                block[1, op, m] += sum_om[gg, op, m]
                block[3, op, m] += best_om[gg, op, m]
    for op in range(N_OPERATORS):
        tot = 0.0
        for gg in range(g):
            tot += ntot[gg, op]
        if tot > 0.0:
            for m in range(N_METRICS):
                block[1, op, m] /= tot
        else:
            for m in range(N_METRICS):
                block[1, op, m] = 0.0
    if g >= 2:
        for op in range(N_OPERATORS):
            n_diff = abs(ntot[g - 1, op] - ntot[g - 2, op])
            for m in range(N_METRICS):
                denom = best_om[g - 2, op, m] * n_diff
                if denom != 0.0:
                    v = (best_om[g - 1, op, m] - best_om[g - 2, op, m]) / denom
                    if v > 0.0:
                        block[2, op, m] = v
    for op in range(N_OPERATORS):
        for m in range(N_METRICS):
            block[4, op, m] = win_sums[op, m]

    # index = 19 + group * 16 + m * 4 + op; each metric column is scaled
    # so the four operator values sum to 1 (all-zero columns stay zero)
    for grp in range(5):
        for m in range(N_METRICS):
            total = 0.0
            for op in range(N_OPERATORS):
                total += block[grp, op, m]
            base = 19 + grp * 16 + m * 4
            if total != 0.0:
                for op in range(N_OPERATORS):
                    s[base + op] = block[grp, op, m] / total
            else:
                for op in range(N_OPERATORS):
                    s[base + op] = 0.0

    for k in range(N_FEATURES):
        if s[k] < 0.0:
            s[k] = 0.0
        elif s[k] > 1.0:
            s[k] = 1.0


def compute_state(
    run: RunState,
    members: np.ndarray,
    fitness: np.ndarray,
    best_index: int,
    i: int,
    r: np.ndarray,
    hist: OperatorHistory,
    win: MetricWindow,
) -> np.ndarray:
    """Assemble the state vector for parent `i` with drawn candidates `r`."""
    s = np.empty(N_FEATURES)
    _state_kernel(
        s,
        run.f_bsf,
        run.f_wsf,
        run.x_bsf,
        float(run.t),
        float(run.budget),
        float(run.stagcount),
        float(run.dim_f),
        float(run.dim_max),
        run.dist_max,
        members,
        fitness,
        int(best_index),
        int(i),
        np.asarray(r, dtype=np.int64),
        hist._ntot,
        hist._nsucc,
        hist._sum_om,
        hist._best_om,
        len(hist),
        win.sums(),
    )
    return s
