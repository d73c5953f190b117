"""Box-constrained continuous test functions for training and evaluation.

The suite covers four difficulty classes (unimodal, basic multimodal,
expanded multimodal, hybrid composition) built from classic primitives:
sphere, Schwefel 1.2, Rosenbrock, Rastrigin, Ackley, Griewank, a
Weierstrass-style function, two expanded two-variable chains and additive
compositions. Every function is a minimisation problem with a known
optimal value (0 plus an optional bias), attained inside the box.

Shifted/rotated instances derive their transform deterministically from
the function id, or from an external data file (one shift row, optionally
followed by a dim x dim rotation matrix).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

CLASS_TAGS = ("unimodal", "multimodal", "expanded", "hybrid")


class BenchError(ValueError):
    """Bad suite configuration or transform data."""


# --- primitives -----------------------------------------------------------
# Each primitive has its global minimum 0 at z = 0 and is non-negative
# everywhere, so shifted/rotated/composed instances keep a known optimum.

def _sphere(z: np.ndarray) -> float:
    return float(np.dot(z, z))


def _schwefel12(z: np.ndarray) -> float:
    c = np.cumsum(z)
    return float(np.dot(c, c))


def _rosenbrock(z: np.ndarray) -> float:
    # Minimum moved to the origin (w = z + 1).
    w = z + 1.0
    return float(np.sum(100.0 * (w[1:] - w[:-1] ** 2) ** 2 + (w[:-1] - 1.0) ** 2))


def _rastrigin(z: np.ndarray) -> float:
    return float(np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z) + 10.0))


def _ackley(z: np.ndarray) -> float:
    d = z.size
    return float(
        20.0
        + np.e
        - 20.0 * np.exp(-0.2 * np.sqrt(np.dot(z, z) / d))
        - np.exp(np.sum(np.cos(2.0 * np.pi * z)) / d)
    )


def _griewank(z: np.ndarray) -> float:
    d = z.size
    return float(
        1.0 + np.dot(z, z) / 4000.0 - np.prod(np.cos(z / np.sqrt(np.arange(1, d + 1))))
    )


_W_A = 0.5 ** np.arange(21)
_W_B = 2.0 * np.pi * 3.0 ** np.arange(21)
_W_BIAS = float(np.sum(_W_A * np.cos(_W_B * 0.5)))


def _weierstrass(z: np.ndarray) -> float:
    terms = _W_A * np.cos(np.outer(z + 0.5, _W_B))
    return float(np.sum(terms) - z.size * _W_BIAS)


def _schaffer_pair(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = x * x + y * y
    return 0.5 + (np.sin(np.sqrt(s)) ** 2 - 0.5) / (1.0 + 0.001 * s) ** 2


def _expanded_schaffer(z: np.ndarray) -> float:
    zn = np.roll(z, -1)
    return float(np.sum(_schaffer_pair(z, zn)))


def _griewank1(v: np.ndarray) -> np.ndarray:
    return 1.0 + v * v / 4000.0 - np.cos(v)


def _expanded_griewank_rosenbrock(z: np.ndarray) -> float:
    w = z + 1.0
    wn = np.roll(w, -1)
    r = 100.0 * (wn - w * w) ** 2 + (w - 1.0) ** 2
    return float(np.sum(_griewank1(r)))


_PRIMITIVES: dict[str, tuple[Callable[[np.ndarray], float], float]] = {
    # name -> (evaluator, half-width of the natural box)
    "sphere": (_sphere, 100.0),
    "schwefel12": (_schwefel12, 100.0),
    "rosenbrock": (_rosenbrock, 100.0),
    "rastrigin": (_rastrigin, 5.0),
    "ackley": (_ackley, 32.0),
    "griewank": (_griewank, 600.0),
    "weierstrass": (_weierstrass, 0.5),
    "expanded_schaffer": (_expanded_schaffer, 100.0),
    "expanded_griewank_rosenbrock": (_expanded_griewank_rosenbrock, 5.0),
}


# --- objective functions ---------------------------------------------------

@dataclass(frozen=True)
class ObjectiveFunction:
    """A box-constrained minimisation problem with a known optimal value."""

    id: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    evaluator: Callable[[np.ndarray], float]
    f_optimum: float | None
    class_tag: str

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise BenchError(f"unknown class tag {self.class_tag!r}")
        if not np.all(self.lower <= self.upper):
            raise BenchError(f"{self.id}: lower bound must not exceed upper")

    def evaluate(self, x: np.ndarray) -> float:
        if len(x) != self.dim:
            raise BenchError(
                f"{self.id}: expected a vector of length {self.dim}, got {len(x)}"
            )
        return self.evaluator(np.asarray(x, dtype=float))


@dataclass
class SuiteConfig:
    """Which functions to instantiate, at which dimensions."""

    train_functions: list[str] = field(default_factory=list)
    test_functions: list[str] = field(default_factory=list)
    dims: list[int] = field(default_factory=lambda: [10, 30])
    transform_paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.train_functions) & set(self.test_functions)
        if overlap:
            raise BenchError(f"train/test sets overlap: {sorted(overlap)}")


@dataclass(frozen=True)
class _Spec:
    class_tag: str
    components: tuple[tuple[str, float], ...]  # (primitive, input scale)
    shifted: bool = False
    rotated: bool = False
    half_width: float | None = None  # defaults to the primitive's natural box


def _hybrid(*names: str) -> tuple[tuple[str, float], ...]:
    # Map the shared [-5, 5] hybrid box into each primitive's working range.
    scales = {
        "sphere": 2.0,
        "schwefel12": 1.0,
        "rosenbrock": 0.5,
        "rastrigin": 1.0,
        "ackley": 4.0,
        "griewank": 20.0,
        "weierstrass": 0.1,
    }
    return tuple((n, scales[n]) for n in names)


_SPECS: dict[str, _Spec] = {
    # unimodal
    "sphere": _Spec("unimodal", (("sphere", 1.0),)),
    "shifted_sphere": _Spec("unimodal", (("sphere", 1.0),), shifted=True),
    "schwefel12": _Spec("unimodal", (("schwefel12", 1.0),)),
    "shifted_rotated_schwefel12": _Spec(
        "unimodal", (("schwefel12", 1.0),), shifted=True, rotated=True
    ),
    "shifted_schwefel12": _Spec("unimodal", (("schwefel12", 1.0),), shifted=True),
    # basic multimodal
    "shifted_rosenbrock": _Spec("multimodal", (("rosenbrock", 1.0),), shifted=True),
    "shifted_rastrigin": _Spec("multimodal", (("rastrigin", 1.0),), shifted=True),
    "shifted_rotated_rastrigin": _Spec(
        "multimodal", (("rastrigin", 1.0),), shifted=True, rotated=True
    ),
    "shifted_rotated_ackley": _Spec(
        "multimodal", (("ackley", 1.0),), shifted=True, rotated=True
    ),
    "shifted_griewank": _Spec("multimodal", (("griewank", 1.0),), shifted=True),
    "shifted_rotated_weierstrass": _Spec(
        "multimodal", (("weierstrass", 1.0),), shifted=True, rotated=True
    ),
    # expanded multimodal
    "expanded_schaffer": _Spec("expanded", (("expanded_schaffer", 1.0),), shifted=True),
    "expanded_griewank_rosenbrock": _Spec(
        "expanded", (("expanded_griewank_rosenbrock", 1.0),), shifted=True
    ),
    # hybrid compositions (shared shift, per-component rotation, box [-5, 5])
    "hybrid_sphere_rastrigin": _Spec(
        "hybrid", _hybrid("sphere", "rastrigin"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_ackley_griewank": _Spec(
        "hybrid", _hybrid("ackley", "griewank"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_rastrigin_weierstrass": _Spec(
        "hybrid", _hybrid("rastrigin", "weierstrass"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_griewank_rosenbrock": _Spec(
        "hybrid", _hybrid("griewank", "rosenbrock"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_ackley_rastrigin_sphere": _Spec(
        "hybrid",
        _hybrid("ackley", "rastrigin", "sphere"),
        shifted=True,
        rotated=True,
        half_width=5.0,
    ),
    "hybrid_sphere_ackley": _Spec(
        "hybrid", _hybrid("sphere", "ackley"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_rastrigin_griewank": _Spec(
        "hybrid", _hybrid("rastrigin", "griewank"), shifted=True, rotated=True, half_width=5.0
    ),
    "hybrid_weierstrass_sphere": _Spec(
        "hybrid", _hybrid("weierstrass", "sphere"), shifted=True, rotated=True, half_width=5.0
    ),
}

DEFAULT_TRAIN_FUNCTIONS = [
    "sphere",
    "shifted_sphere",
    "schwefel12",
    "shifted_rotated_schwefel12",
    "shifted_rosenbrock",
    "shifted_rastrigin",
    "shifted_rotated_ackley",
    "shifted_griewank",
    "shifted_rotated_weierstrass",
    "expanded_schaffer",
    "expanded_griewank_rosenbrock",
    "hybrid_sphere_rastrigin",
    "hybrid_ackley_griewank",
    "hybrid_rastrigin_weierstrass",
    "hybrid_griewank_rosenbrock",
    "hybrid_ackley_rastrigin_sphere",
]

DEFAULT_TEST_FUNCTIONS = [
    "shifted_schwefel12",
    "shifted_rotated_rastrigin",
    "hybrid_sphere_ackley",
    "hybrid_rastrigin_griewank",
    "hybrid_weierstrass_sphere",
]


def registered_functions() -> list[tuple[str, str]]:
    """All registered function ids with their class tags."""
    return [(name, spec.class_tag) for name, spec in sorted(_SPECS.items())]


def _id_rng(name: str, dim: int, salt: str = "") -> np.random.Generator:
    digest = hashlib.sha256(f"{name}|{dim}|{salt}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def build_function(
    name: str,
    dim: int,
    shift: np.ndarray | None = None,
    rotation: np.ndarray | None = None,
    bias: float = 0.0,
) -> ObjectiveFunction:
    """Instantiate a registered function at the given dimension.

    `shift` and `rotation` override the deterministic per-id transform
    (e.g. when loaded from an external data file).
    """
    spec = _SPECS.get(name)
    if spec is None:
        raise BenchError(f"unknown function id {name!r}")
    if dim < 2:
        raise BenchError(f"{name}: dimension must be >= 2, got {dim}")

    hw = spec.half_width
    if hw is None:
        hw = _PRIMITIVES[spec.components[0][0]][1]
    lower = np.full(dim, -hw)
    upper = np.full(dim, hw)

    if spec.shifted:
        if shift is None:
            shift = _id_rng(name, dim, "shift").uniform(-0.8 * hw, 0.8 * hw, dim)
        else:
            shift = np.asarray(shift, dtype=float)
            if shift.shape != (dim,):
                raise BenchError(f"{name}: shift must have length {dim}")
    else:
        shift = None

    rotations: list[np.ndarray | None] = []
    for k, (prim, _scale) in enumerate(spec.components):
        if not spec.rotated:
            rotations.append(None)
        elif rotation is not None:
            rotations.append(np.asarray(rotation, dtype=float))
        else:
            rotations.append(_random_rotation(dim, _id_rng(name, dim, f"rot{k}")))

    evaluators = [_PRIMITIVES[prim][0] for prim, _ in spec.components]
    scales = [scale for _, scale in spec.components]

    def evaluator(x: np.ndarray) -> float:
        z0 = x - shift if shift is not None else x
        total = bias
        for fn, scale, rot in zip(evaluators, scales, rotations):
            z = rot @ z0 if rot is not None else z0
            total += fn(scale * z if scale != 1.0 else z)
        return float(total)

    func_id = f"{name}-{dim}"
    return ObjectiveFunction(
        id=func_id,
        dim=dim,
        lower=lower,
        upper=upper,
        evaluator=evaluator,
        f_optimum=bias,
        class_tag=spec.class_tag,
    )


def make_suite(
    function_ids: Sequence[str],
    dims: Sequence[int],
    transform_paths: dict[str, str] | None = None,
) -> list[ObjectiveFunction]:
    """Instantiate every named function at every dimension."""
    transform_paths = transform_paths or {}
    suite = []
    for name in function_ids:
        for dim in dims:
            shift = rotation = None
            if name in transform_paths:
                shift, rotation = load_transform_data(transform_paths[name], dim)
            suite.append(build_function(name, dim, shift=shift, rotation=rotation))
    ids = [f.id for f in suite]
    if len(set(ids)) != len(ids):
        raise BenchError("duplicate function ids in suite")
    return suite


def load_transform_data(
    path: str, dim: int, check_orthogonal: bool = False
) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a shift vector and optional rotation matrix from a text file.

    Format: first row holds `dim` reals (the shift); if present, the next
    `dim` rows hold the rotation matrix.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                values = [float(tok) for tok in line.split()]
            except ValueError as exc:
                raise BenchError(f"{path}:{lineno}: {exc}") from None
            if len(values) != dim:
                raise BenchError(
                    f"{path}:{lineno}: expected {dim} values, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise BenchError(f"{path}: empty transform file")
    shift = np.array(rows[0])
    rotation = None
    if len(rows) > 1:
        if len(rows) != dim + 1:
            raise BenchError(
                f"{path}:{len(rows)}: rotation block must have {dim} rows, "
                f"got {len(rows) - 1}"
            )
        rotation = np.array(rows[1:])
        if check_orthogonal:
            err = np.max(np.abs(rotation @ rotation.T - np.eye(dim)))
            if err > 1e-6:
                raise BenchError(f"{path}: rotation is not orthogonal (error {err:.2e})")
    return shift, rotation
