"""Benchmark suite: primitive values, transforms, suite construction."""

import numpy as np
import pytest

from deopt.bench import (
    DEFAULT_TEST_FUNCTIONS,
    DEFAULT_TRAIN_FUNCTIONS,
    BenchError,
    build_function,
    load_transform_data,
    make_suite,
    registered_functions,
)

ALL_IDS = [name for name, _ in registered_functions()]


def test_known_values_at_simple_points():
    # evaluate primitives at hand-checkable points (zero shift, no rotation)
    sphere = build_function("sphere", 2)
    assert sphere.evaluate(np.array([1.0, 2.0])) == 5.0

    schwefel = build_function("schwefel12", 3)
    # partial sums 1, 3, 6 -> squares 1 + 9 + 36
    assert schwefel.evaluate(np.array([1.0, 2.0, 3.0])) == 46.0

    rastrigin = build_function("shifted_rastrigin", 4, shift=np.zeros(4))
    assert rastrigin.evaluate(np.zeros(4)) == pytest.approx(0.0, abs=1e-12)
    # cos(2*pi) = 1 at integer offsets, so only the quadratic term remains
    assert rastrigin.evaluate(np.array([1.0, 0.0, 0.0, 0.0])) == pytest.approx(1.0)

    griewank = build_function("shifted_griewank", 5, shift=np.zeros(5))
    assert griewank.evaluate(np.zeros(5)) == pytest.approx(0.0, abs=1e-12)


def test_minima_at_the_shift_point():
    dim = 6
    zeros = np.zeros(dim)
    eye = np.eye(dim)
    cases = [
        ("sphere", {}),
        ("schwefel12", {}),
        ("shifted_rosenbrock", {"shift": zeros}),
        ("shifted_rastrigin", {"shift": zeros}),
        ("shifted_rotated_ackley", {"shift": zeros, "rotation": eye}),
        ("shifted_griewank", {"shift": zeros}),
        ("shifted_rotated_weierstrass", {"shift": zeros, "rotation": eye}),
        ("expanded_schaffer", {"shift": zeros}),
        ("expanded_griewank_rosenbrock", {"shift": zeros}),
    ]
    for name, kwargs in cases:
        func = build_function(name, dim, **kwargs)
        assert func.f_optimum == 0.0
        assert func.evaluate(zeros) == pytest.approx(0.0, abs=1e-9), name


def test_everywhere_above_optimum():
    rng = np.random.default_rng(0)
    for name in ALL_IDS:
        func = build_function(name, 10)
        span = func.upper - func.lower
        for _ in range(30):
            x = func.lower + rng.random(10) * span
            assert func.evaluate(x) >= func.f_optimum - 1e-9, name


def test_shift_moves_the_optimum():
    rng = np.random.default_rng(1)
    shift = rng.uniform(-2, 2, size=8)
    func = build_function("shifted_sphere", 8, shift=shift)
    assert func.evaluate(shift) == pytest.approx(0.0, abs=1e-12)
    assert func.evaluate(shift + 0.5) > 0


def test_rotation_preserves_the_optimum():
    shift = np.full(6, 0.7)
    func = build_function("shifted_rotated_rastrigin", 6, shift=shift)
    assert func.evaluate(shift) == pytest.approx(0.0, abs=1e-9)


def test_bias_offsets_values():
    func = build_function("sphere", 3, bias=120.0)
    assert func.f_optimum == 120.0
    assert func.evaluate(np.zeros(3)) == pytest.approx(120.0)


def test_hybrid_optimum_attained_at_shared_shift():
    shift = np.full(10, -1.25)
    for name in ("hybrid_sphere_ackley", "hybrid_rastrigin_griewank",
                 "hybrid_weierstrass_sphere"):
        func = build_function(name, 10, shift=shift)
        assert func.evaluate(shift) == pytest.approx(0.0, abs=1e-9), name


def test_derived_transforms_are_deterministic():
    a = build_function("shifted_rotated_ackley", 10)
    b = build_function("shifted_rotated_ackley", 10)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.uniform(a.lower, a.upper)
        assert a.evaluate(x) == b.evaluate(x)
    # a different dimension draws different transforms
    c = build_function("shifted_rotated_ackley", 12)
    assert c.dim == 12


def test_make_suite_ids_and_order():
    suite = make_suite(["sphere", "shifted_rastrigin"], [10, 30])
    assert [f.id for f in suite] == [
        "sphere-10", "sphere-30", "shifted_rastrigin-10", "shifted_rastrigin-30"
    ]
    assert all(f.f_optimum == 0.0 for f in suite)


def test_unknown_function_rejected():
    with pytest.raises(BenchError):
        make_suite(["does_not_exist"], [10])


def test_default_split_disjoint():
    assert len(DEFAULT_TRAIN_FUNCTIONS) == 16
    assert len(DEFAULT_TEST_FUNCTIONS) == 5
    assert not set(DEFAULT_TRAIN_FUNCTIONS) & set(DEFAULT_TEST_FUNCTIONS)
    known = set(ALL_IDS)
    assert set(DEFAULT_TRAIN_FUNCTIONS) <= known
    assert set(DEFAULT_TEST_FUNCTIONS) <= known


class TestTransformFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        shift = rng.uniform(-1, 1, size=4)
        path = tmp_path / "t.txt"
        rows = [" ".join(repr(float(v)) for v in shift)]
        rows += [" ".join(repr(float(v)) for v in row) for row in q]
        path.write_text("\n".join(rows) + "\n")
        got_shift, got_rot = load_transform_data(path, 4)
        assert np.array_equal(got_shift, shift)
        assert np.array_equal(got_rot, q)

    def test_wrong_width_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 2.0\n3.0\n")
        with pytest.raises(BenchError, match=r"bad\.txt:2"):
            load_transform_data(path, 2)

    def test_non_orthogonal_matrix_rejected(self, tmp_path):
        path = tmp_path / "skew.txt"
        rows = ["0.0 0.0", "1.0 1.0", "0.0 1.0"]
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(BenchError):
            load_transform_data(path, 2, check_orthogonal=True)
