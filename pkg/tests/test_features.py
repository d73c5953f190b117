"""State-vector bookkeeping: history, window, and the 99 features."""

import numpy as np
import pytest

from deopt.bench import make_suite
from deopt.de import DEParams, DERun, Strategy
from deopt.features import (
    N_FEATURES,
    N_METRICS,
    N_OPERATORS,
    MetricWindow,
    OperatorHistory,
    RunState,
    compute_state,
    record_application,
)


def om_values(parent_f, trial_f, f_best_parent, f_bsf, f_median):
    return np.array([parent_f, f_best_parent, f_bsf, f_median]) - trial_f


class TestRecordApplication:
    def test_hand_example(self):
        hist = OperatorHistory()
        win = MetricWindow()
        om = record_application(hist, win, 2, parent_f=5.0, trial_f=3.0,
                                f_best_parent=4.0, f_bsf=2.0, f_median=6.0)
        assert np.array_equal(om, [2.0, 1.0, -1.0, 3.0])
        # negative improvement on the third metric is not a success
        assert np.array_equal(hist._nsucc[0, 2], [1, 1, 0, 1])
        assert np.array_equal(hist._sum_om[0, 2], [2.0, 1.0, 0.0, 3.0])
        assert hist._ntot[0, 2] == 1
        assert len(win) == 1  # om1 > 0 -> window entry

    def test_no_improvement_only_counts(self):
        hist = OperatorHistory()
        win = MetricWindow()
        record_application(hist, win, 0, parent_f=3.0, trial_f=9.0,
                           f_best_parent=2.0, f_bsf=1.0, f_median=4.0)
        assert hist._ntot[0, 0] == 1
        assert not hist._nsucc.any()
        assert len(win) == 0

    def test_best_improvement_is_a_running_max(self):
        hist = OperatorHistory()
        win = MetricWindow()
        for trial_f in (4.0, 1.0, 3.0):
            record_application(hist, win, 1, parent_f=5.0, trial_f=trial_f,
                               f_best_parent=5.0, f_bsf=5.0, f_median=5.0)
        assert hist._best_om[0, 1, 0] == 4.0


class TestOperatorHistory:
    def test_ring_grows_then_caps(self):
        hist = OperatorHistory(gen=10)
        assert len(hist) == 1
        for _ in range(2):
            hist.rotate()
        assert len(hist) == 3
        for _ in range(12):
            hist.rotate()
        assert len(hist) == 10

    def test_rotation_drops_the_oldest_record(self):
        hist = OperatorHistory(gen=3)
        for k in range(3):
            for _ in range(k + 1):  # generation k gets k+1 applications
                hist.record(0, np.zeros(N_METRICS))
            hist.rotate()
        # records now hold counts 2, 3 and the fresh empty generation
        assert hist._ntot[:, 0].tolist() == [2.0, 3.0, 0.0]

    def test_new_record_starts_empty(self):
        hist = OperatorHistory(gen=4)
        hist.record(2, np.array([1.0, 1.0, 1.0, 1.0]))
        hist.rotate()
        g = len(hist) - 1
        assert not hist._ntot[g].any()
        assert not hist._nsucc[g].any()
        assert not hist._sum_om[g].any()
        assert not hist._best_om[g].any()


class TestMetricWindow:
    def test_per_operator_fifo_at_capacity(self):
        win = MetricWindow(capacity=4)
        for k in range(4):
            win.insert(0, np.full(N_METRICS, float(k + 1)), f_u=10.0 + k)
        # a fifth op-0 entry replaces the oldest op-0 entry, not the worst
        win.insert(0, np.full(N_METRICS, 9.0), f_u=0.5)
        entries = win.entries()
        assert len(entries) == 4
        oms = sorted(e[1][0] for e in entries)
        assert oms == [2.0, 3.0, 4.0, 9.0]

    def test_worst_offspring_evicted_for_new_operator(self):
        win = MetricWindow(capacity=3)
        win.insert(0, np.ones(N_METRICS), f_u=5.0)
        win.insert(0, np.ones(N_METRICS), f_u=50.0)  # worst offspring fitness
        win.insert(1, np.ones(N_METRICS), f_u=7.0)
        win.insert(2, np.full(N_METRICS, 2.0), f_u=1.0)
        entries = win.entries()
        assert len(entries) == 3
        assert 50.0 not in [e[2] for e in entries]

    def test_sums_match_entries(self):
        rng = np.random.default_rng(0)
        win = MetricWindow(capacity=6)
        for _ in range(40):
            op = int(rng.integers(N_OPERATORS))
            om = rng.normal(size=N_METRICS)
            om[0] = abs(om[0]) + 1e-3
            win.insert(op, om, f_u=float(rng.random()))
            expect = np.zeros((N_OPERATORS, N_METRICS))
            for eop, eom, _ in win.entries():
                expect[eop] += eom
            assert np.allclose(win.sums(), expect, atol=1e-12)
            assert np.all(win.sums() >= -1e-12)  # stored values are clipped at 0


def _blank_run(dim=4, t=200, budget=1000, stag=20, dim_max=30):
    rng = np.random.default_rng(1)
    members = rng.uniform(-5, 5, size=(10, dim))
    fitness = np.arange(10, dtype=float) + 1.0
    state = RunState(
        f_bsf=1.0, f_wsf=10.0, x_bsf=members[0].copy(), t=t, budget=budget,
        stagcount=stag, dim_f=dim, dim_max=dim_max,
        dist_max=float(np.linalg.norm(np.full(dim, 10.0))),
    )
    return state, members, fitness


class TestComputeState:
    def test_fresh_history_zeroes_the_learned_groups(self):
        state, members, fitness = _blank_run()
        s = compute_state(state, members, fitness, 0, 3, np.array([0, 1, 2, 4, 5]),
                          OperatorHistory(), MetricWindow())
        assert s.shape == (N_FEATURES,)
        assert not s[19:].any()

    def test_head_features(self):
        state, members, fitness = _blank_run(t=200, budget=1000, stag=20)
        s = compute_state(state, members, fitness, 0, 0, np.array([1, 2, 3, 4, 5]),
                          OperatorHistory(), MetricWindow())
        # parent 0 holds the best fitness, range is 9
        assert s[0] == 0.0
        assert s[1] == pytest.approx((fitness.mean() - 1.0) / 9.0)
        assert s[2] == pytest.approx(fitness.std() / 4.5)
        assert s[3] == pytest.approx(0.8)
        assert s[4] == pytest.approx(4 / 30)
        assert s[5] == pytest.approx(0.02)
        assert s[11] == 0.0  # parent 0 is also the best member
        assert s[18] == 0.0  # ... and equals x_bsf here

    def test_budget_fraction_endpoints(self):
        state, members, fitness = _blank_run(t=0, budget=500)
        r = np.array([1, 2, 3, 4, 5])
        s = compute_state(state, members, fitness, 0, 0, r,
                          OperatorHistory(), MetricWindow())
        assert s[3] == 1.0
        state.t = 500
        s = compute_state(state, members, fitness, 0, 0, r,
                          OperatorHistory(), MetricWindow())
        assert s[3] == 0.0

    def test_two_point_population_saturates_std(self):
        state, members, fitness = _blank_run()
        fitness = np.array([1.0] * 5 + [10.0] * 5)
        state.f_bsf, state.f_wsf = 1.0, 10.0
        s = compute_state(state, members, fitness, 0, 0, np.array([1, 2, 3, 4, 5]),
                          OperatorHistory(), MetricWindow())
        assert s[2] == pytest.approx(1.0)

    def test_degenerate_range_gives_zeroes(self):
        state, members, fitness = _blank_run()
        fitness = np.full(10, 3.0)
        state.f_bsf = state.f_wsf = 3.0
        state.dist_max = 0.0
        s = compute_state(state, members, fitness, 0, 0, np.array([1, 2, 3, 4, 5]),
                          OperatorHistory(), MetricWindow())
        assert np.all(np.isfinite(s))
        assert not s[:3].any() and not s[6:19].any()

    def test_success_rate_block_before_normalisation(self):
        # single op applied 4 times in one generation, 2 successes on metric 1
        hist = OperatorHistory()
        win = MetricWindow()
        for trial_f in (4.0, 4.5, 6.0, 7.0):  # two improve on the parent
            record_application(hist, win, 0, parent_f=5.0, trial_f=trial_f,
                               f_best_parent=1.0, f_bsf=1.0, f_median=5.0)
        rate = hist._nsucc[0, 0, 0] / hist._ntot[0, 0]
        assert rate == 0.5
        # with a single active operator, normalisation maps it to exactly 1
        state, members, fitness = _blank_run()
        s = compute_state(state, members, fitness, 0, 0, np.array([1, 2, 3, 4, 5]),
                          hist, win)
        assert s[19] == 1.0

    def test_layout_is_metric_major(self):
        hist = OperatorHistory()
        win = MetricWindow()
        # op 1 succeeds only on metric 0; op 3 succeeds on all four
        record_application(hist, win, 1, parent_f=5.0, trial_f=4.0,
                           f_best_parent=1.0, f_bsf=1.0, f_median=3.0)
        record_application(hist, win, 3, parent_f=5.0, trial_f=0.5,
                           f_best_parent=1.0, f_bsf=1.0, f_median=3.0)
        state, members, fitness = _blank_run()
        s = compute_state(state, members, fitness, 0, 0, np.array([1, 2, 3, 4, 5]),
                          hist, win)
        group = s[19:35].reshape(N_METRICS, N_OPERATORS)
        assert group[0, 1] == 0.5 and group[0, 3] == 0.5  # both succeed on m=1
        assert group[1, 1] == 0.0 and group[1, 3] == 1.0
        assert group[3, 1] == 0.0 and group[3, 3] == 1.0

    def test_pure_function_of_inputs(self):
        state, members, fitness = _blank_run()
        hist, win = OperatorHistory(), MetricWindow()
        r = np.array([2, 3, 4, 5, 6])
        a = compute_state(state, members, fitness, 0, 1, r, hist, win)
        b = compute_state(state, members, fitness, 0, 1, r, hist, win)
        assert np.array_equal(a, b)
        assert not hist._ntot.any()


def brute_force_groups(trace, gen_boundaries, gen_cap, window_cap):
    """Recompute feature groups 20-99 from a raw application trace.

    `trace` is a list of (op, om, f_u) applications; `gen_boundaries` the
    trace positions where a generation ended. Returns the (5, 4, 4)
    pre-normalisation block array.
    """
    # split into generations, keep the trailing open one
    gens, start = [], 0
    for b in gen_boundaries:
        gens.append(trace[start:b])
        start = b
    gens.append(trace[start:])
    gens = gens[-gen_cap:]

    ntot = np.zeros((len(gens), N_OPERATORS))
    nsucc = np.zeros((len(gens), N_OPERATORS, N_METRICS))
    sum_om = np.zeros((len(gens), N_OPERATORS, N_METRICS))
    best_om = np.zeros((len(gens), N_OPERATORS, N_METRICS))
    for g, apps in enumerate(gens):
        for op, om, _ in apps:
            ntot[g, op] += 1
            for m in range(N_METRICS):
                if om[m] > 0:
                    nsucc[g, op, m] += 1
                    sum_om[g, op, m] += om[m]
                    best_om[g, op, m] = max(best_om[g, op, m], om[m])

    block = np.zeros((5, N_OPERATORS, N_METRICS))
    for g in range(len(gens)):
        for op in range(N_OPERATORS):
            if ntot[g, op] > 0:
                block[0, op] += nsucc[g, op] / ntot[g, op]
    tot = ntot.sum(axis=0)
    for op in range(N_OPERATORS):
        if tot[op] > 0:
            block[1, op] = sum_om[:, op].sum(axis=0) / tot[op]
    if len(gens) >= 2:
        for op in range(N_OPERATORS):
            nd = abs(ntot[-1, op] - ntot[-2, op])
            for m in range(N_METRICS):
                den = best_om[-2, op, m] * nd
                if den != 0:
                    delta = (best_om[-1, op, m] - best_om[-2, op, m]) / den
                    # negative deltas are dropped before normalisation so the
                    # cross-operator sums still land on exactly 0 or 1
                    block[2, op, m] = max(delta, 0.0)
    block[3] = best_om.sum(axis=0)

    window = []  # replay the insertion protocol; entries age by `seq`
    for seq, (op, om, f_u) in enumerate(t for t in trace if t[1][0] > 0):
        entry = (op, np.maximum(om, 0.0), f_u, seq)
        if len(window) < window_cap:
            window.append(entry)
            continue
        same = [k for k, e in enumerate(window) if e[0] == op]
        if same:
            slot = min(same, key=lambda k: window[k][3])
        else:
            slot = max(range(len(window)), key=lambda k: window[k][2])
        window[slot] = entry
    for op, om, _, _ in window:
        block[4, op] += om
    return block


def normalise(block):
    out = np.zeros_like(block)
    for grp in range(5):
        for m in range(N_METRICS):
            total = block[grp, :, m].sum()
            if total != 0:
                out[grp, :, m] = block[grp, :, m] / total
    return np.clip(out, 0.0, 1.0)


def test_brute_force_trace_oracle():
    rng = np.random.default_rng(7)
    hist = OperatorHistory(gen=4)
    win = MetricWindow(capacity=8)
    trace, boundaries = [], []
    state, members, fitness = _blank_run()
    r = np.array([1, 2, 3, 4, 5])
    for step in range(1, 121):
        op = int(rng.integers(N_OPERATORS))
        # dyadic values keep every downstream sum exact in floating point
        parent_f = float(rng.integers(1, 32)) / 4.0
        trial_f = float(rng.integers(1, 32)) / 4.0
        refs = rng.integers(1, 32, size=3) / 4.0
        om = record_application(hist, win, op, parent_f, trial_f,
                                refs[0], refs[1], refs[2])
        trace.append((op, om, trial_f))
        if step % 25 == 0:
            hist.rotate()
            boundaries.append(step)

        s = compute_state(state, members, fitness, 0, 0, r, hist, win)
        block = brute_force_groups(trace, boundaries, gen_cap=4, window_cap=8)
        expected = normalise(block).transpose(0, 2, 1).reshape(-1)
        assert np.array_equal(s[19:], expected), f"step {step}"


def test_feature_bounds_on_live_runs():
    func = make_suite(["shifted_rotated_rastrigin"], [10])[0]
    rng = np.random.default_rng(8)
    run = DERun(func, DEParams(NP=20, budget=2000, stop_tol=0.0), rng, dim_max=30)
    while not run.done:
        s = run.observe()
        assert np.all(np.isfinite(s))
        assert s.min() >= 0.0 and s.max() <= 1.0
        sums = s[19:].reshape(5, N_METRICS, N_OPERATORS).sum(axis=2)
        ok = np.isclose(sums, 1.0, atol=1e-9) | (sums == 0.0)
        assert ok.all()
        run.step(Strategy(int(rng.integers(4))))
