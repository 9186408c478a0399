"""Synthetic distributed least-squares objectives.

Node i holds f_i(x) = ||A_i x + b_i||^2 on a shared parameter x in R^d;
the global objective is the average f = (1/n) sum_i f_i. Gradients are
2 A_i^T (A_i x + b_i), so f_i is L_i-smooth with L_i twice the top
eigenvalue of A_i^T A_i.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .linalg import top_eigenvalue

__all__ = [
    "QuadNode",
    "Problem",
    "make_random_quadratics",
    "make_two_class_ring",
    "make_replicated",
    "permute_nodes",
    "global_optimum",
    "full_gradients",
    "stochastic_gradients",
    "zeta_sq_at",
    "relative_zeta_sq_at",
]

TWO_CLASS_NODES = 16
TWO_CLASS_NOISE_STD = sqrt(0.001)


@dataclass(frozen=True)
class QuadNode:
    """One node's data: f(x) = ||A x + b||^2."""

    a: np.ndarray  # (m, d)
    b: np.ndarray  # (m,)

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise ValueError(f"incompatible shapes A {a.shape}, b {b.shape}")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def value(self, x: np.ndarray) -> float:
        r = self.a @ x + self.b
        return float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.a.T @ (self.a @ x + self.b))


@dataclass(frozen=True)
class Problem:
    """A collection of quadratic nodes with a cached optimum and smoothness bound.

    noise_std is the per-entry standard deviation of the additive gradient
    noise used by stochastic_gradients.
    """

    nodes: tuple[QuadNode, ...]
    noise_std: float
    x_star: np.ndarray
    smoothness: float

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def d(self) -> int:
        return self.nodes[0].a.shape[1]

    def loss(self, x: np.ndarray) -> float:
        return sum(node.value(x) for node in self.nodes) / self.n


def _solve_optimum(nodes: tuple[QuadNode, ...]) -> np.ndarray:
    """Dense symmetric solve of sum A^T A x = -sum A^T b, with a residual check."""
    d = nodes[0].a.shape[1]
    h = np.zeros((d, d))
    rhs = np.zeros(d)
    for node in nodes:
        h += node.a.T @ node.a
        rhs -= node.a.T @ node.b
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise ValueError("aggregate quadratic is singular; no unique optimum") from exc
    x = np.linalg.solve(h, rhs)
    resid = np.linalg.norm(h @ x - rhs) / max(1.0, np.linalg.norm(rhs))
    if resid > 1e-8:
        raise ArithmeticError(f"optimum solve is ill-conditioned (residual {resid:.3e})")
    return x


def _build(nodes: tuple[QuadNode, ...], noise_std: float) -> Problem:
    if noise_std < 0:
        raise ValueError(f"noise_std must be nonnegative, got {noise_std}")
    x_star = _solve_optimum(nodes)
    smooth = 2.0 * max(top_eigenvalue(node.a.T @ node.a) for node in nodes)
    grad = sum(node.gradient(x_star) for node in nodes) / len(nodes)
    if np.linalg.norm(grad) > 1e-8 * (1.0 + np.linalg.norm(x_star)):
        raise ArithmeticError("cached optimum is not stationary")
    x_star.flags.writeable = False
    return Problem(nodes, float(noise_std), x_star, float(smooth))


def make_random_quadratics(
    n: int, d: int, m: int | None = None, seed: int = 0, noise_std: float = 0.0
) -> Problem:
    """n independent nodes with standard normal A_i (m-by-d) and b_i.

    Requires n*m >= d so the aggregate Hessian can be invertible; an
    actually singular draw is an error rather than a silent fixup.
    """
    if m is None:
        m = d
    if n * m < d:
        raise ValueError(f"need n*m >= d for a unique optimum, got {n}*{m} < {d}")
    rng = np.random.default_rng(seed)
    nodes = tuple(
        QuadNode(rng.standard_normal((m, d)), rng.standard_normal(m)) for _ in range(n)
    )
    return _build(nodes, noise_std)


def make_two_class_ring(
    d: int, seed: int = 0, noise_std: float = TWO_CLASS_NOISE_STD
) -> Problem:
    """Sixteen nodes, two objectives, alternating around the ring.

    One shared standard normal A defines f1(x) = ||A(x - 1)||^2 on even
    nodes and f2(x) = ||A(x + 1)||^2 on odd nodes, so the optimum is the
    origin and neighboring pairs average to the global objective.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    shift = a @ np.ones(d)
    nodes = tuple(
        QuadNode(a, -shift if i % 2 == 0 else shift) for i in range(TWO_CLASS_NODES)
    )
    return _build(nodes, noise_std)


def make_replicated(
    n: int, d: int, m: int | None = None, period: int = 2, seed: int = 0,
    noise_std: float = 0.0,
) -> Problem:
    """Random nodes whose data repeats with the given period; period must divide n."""
    if period < 1 or n % period:
        raise ValueError(f"period {period} must divide n={n}")
    if m is None:
        m = d
    rng = np.random.default_rng(seed)
    base = [
        QuadNode(rng.standard_normal((m, d)), rng.standard_normal(m))
        for _ in range(period)
    ]
    return _build(tuple(base[i % period] for i in range(n)), noise_std)


def permute_nodes(problem: Problem, perm) -> Problem:
    """Reassign node data by a permutation; the optimum and smoothness are unchanged."""
    perm = list(int(i) for i in perm)
    if sorted(perm) != list(range(problem.n)):
        raise ValueError("perm must be a permutation of 0..n-1")
    return Problem(
        tuple(problem.nodes[i] for i in perm),
        problem.noise_std,
        problem.x_star,
        problem.smoothness,
    )


def global_optimum(problem: Problem) -> np.ndarray:
    """Recompute the minimizer of the average objective from scratch."""
    return _solve_optimum(problem.nodes)


def full_gradients(problem: Problem, x: np.ndarray) -> np.ndarray:
    """Column i is node i's exact gradient at column i of the d-by-n matrix x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.d, problem.n):
        raise ValueError(f"expected shape {(problem.d, problem.n)}, got {x.shape}")
    out = np.empty_like(x)
    for i, node in enumerate(problem.nodes):
        out[:, i] = node.gradient(x[:, i])
    return out


def stochastic_gradients(
    problem: Problem, x: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Exact gradients plus independent per-entry N(0, noise_std^2) noise."""
    g = full_gradients(problem, x)
    if problem.noise_std > 0.0:
        g = g + rng.normal(0.0, problem.noise_std, size=g.shape)
    return g


def _common_point_gradients(problem: Problem, x: np.ndarray) -> np.ndarray:
    tiled = np.tile(np.asarray(x, dtype=float).reshape(-1, 1), (1, problem.n))
    return full_gradients(problem, tiled)


def zeta_sq_at(problem: Problem, x: np.ndarray) -> float:
    """Heterogeneity at x: (1/n) sum_i ||grad f_i(x) - grad f(x)||^2."""
    g = _common_point_gradients(problem, x)
    return float(np.sum((g - g.mean(axis=1, keepdims=True)) ** 2)) / problem.n


def relative_zeta_sq_at(problem: Problem, x: np.ndarray, w) -> float:
    """Post-mixing heterogeneity at x: (1/n) ||grad f(x 1^T) W - mean||_F^2.

    Accepts a MixingMatrix or a plain array for w.
    """
    arr = w.w if hasattr(w, "w") else np.asarray(w, dtype=float)
    g = _common_point_gradients(problem, x)
    mixed = g @ arr - g.mean(axis=1, keepdims=True)
    return float(np.sum(mixed**2)) / problem.n
