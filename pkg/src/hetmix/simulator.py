"""Decentralized SGD runners with per-step metrics.

All variants share the update skeleton X <- (X - eta U) W applied as a
right multiplication, starting from X = 0, with metrics recorded before
each update from the step's own state, gradients, and applied matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .gme import GmeSolverParams, SketchConfig, ce_gme, center_columns, gram, solve_gme
from .mixing import MixingMatrix, metropolis_hastings
from .objectives import Problem, full_gradients, stochastic_gradients
from .topology import Topology

__all__ = [
    "ALGORITHMS",
    "RunConfig",
    "MetricsLog",
    "Trace",
    "DivergenceError",
    "run_dsgd",
    "run_hadsgd",
    "run_decoupled",
    "run_hadsgd_momentum",
    "check_update_identity",
]

ALGORITHMS = ("dsgd", "hadsgd", "decoupled", "hadsgd_momentum")

_CSV_HEADER = (
    "step,dist_to_opt,dist_to_opt_mean,consensus,gme,loss,"
    "dist_to_opt_w,consensus_w,gme_w"
)

_DIVERGE_LIMIT = 1e100


class DivergenceError(RuntimeError):
    """A trajectory left the representable range; .step says when."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"run diverged at step {step}" + (f": {detail}" if detail else ""))


@dataclass
class RunConfig:
    """Shared knobs for all runners; period and sketch_* matter only to the periodic variants."""

    steps: int
    lr: float
    algorithm: str = "dsgd"
    period: int = 100
    sketch_dim: int = 64
    sketch_seed: int = 0
    data_seed: int = 0
    noise_seed: int = 0
    alternate: bool = True
    momentum: float = 0.9
    window: int = 5

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if self.sketch_dim < 1:
            raise ValueError(f"sketch_dim must be >= 1, got {self.sketch_dim}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


@dataclass
class Trace:
    """Everything needed to replay a run: states, applied directions, applied matrices."""

    lr: float
    x: list[np.ndarray] = field(default_factory=list)
    grads: list[np.ndarray] = field(default_factory=list)
    w_params: list[np.ndarray] = field(default_factory=list)
    w_grads: list[np.ndarray] = field(default_factory=list)


@dataclass
class MetricsLog:
    """Per-step series (length = steps), plus trailing-window averages.

    gme is the squared gap ||G W - Gbar||_F^2 for the step's own gradient
    matrix and applied gradient-mixing matrix; dist_to_opt averages
    per-node distances while dist_to_opt_mean is the distance of the mean.
    """

    step: np.ndarray
    dist_to_opt: np.ndarray
    dist_to_opt_mean: np.ndarray
    consensus: np.ndarray
    gme: np.ndarray
    loss: np.ndarray
    dist_to_opt_w: np.ndarray
    consensus_w: np.ndarray
    gme_w: np.ndarray
    trace: Trace | None = None

    def write_csv(self, path) -> None:
        """10-significant-digit CSV with LF endings and a fixed header."""
        with open(path, "w", newline="\n") as fh:
            fh.write(_CSV_HEADER + "\n")
            for t in range(len(self.step)):
                vals = (
                    self.dist_to_opt[t], self.dist_to_opt_mean[t], self.consensus[t],
                    self.gme[t], self.loss[t], self.dist_to_opt_w[t],
                    self.consensus_w[t], self.gme_w[t],
                )
                fh.write(f"{int(self.step[t])}," + ",".join(f"{v:.10g}" for v in vals) + "\n")


def _trailing_mean(v: np.ndarray, window: int) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(v)])
    out = np.empty(len(v))
    for t in range(len(v)):
        lo = max(0, t - window + 1)
        out[t] = (csum[t + 1] - csum[lo]) / (t - lo + 1)
    return out


def _simulate(
    problem: Problem,
    topology: Topology,
    cfg: RunConfig,
    matrices_for_step,
    direction_for_step=None,
    exact_gradients: bool = False,
    record_trace: bool = False,
) -> MetricsLog:
    d, n = problem.d, topology.n
    if problem.n != n:
        raise ValueError(f"problem has {problem.n} nodes but graph has {n}")
    if cfg.lr > 2.0 / problem.smoothness:
        warnings.warn(
            f"lr {cfg.lr:.3g} exceeds 2/L = {2.0 / problem.smoothness:.3g}; "
            "expect divergence",
            RuntimeWarning,
        )
    x = np.zeros((d, n))
    rng = np.random.default_rng(cfg.noise_seed)
    x_star = problem.x_star.reshape(-1, 1)
    cols = {name: np.empty(cfg.steps) for name in
            ("dist_to_opt", "dist_to_opt_mean", "consensus", "gme", "loss")}
    trace = Trace(lr=cfg.lr, x=[x.copy()]) if record_trace else None
    for t in range(cfg.steps):
        if exact_gradients:
            g = full_gradients(problem, x)
        else:
            g = stochastic_gradients(problem, x, rng)
        u = g if direction_for_step is None else direction_for_step(t, g)
        wp, wg = matrices_for_step(t, x, u)
        mean = x.mean(axis=1, keepdims=True)
        cols["dist_to_opt"][t] = np.linalg.norm(x - x_star, axis=0).mean()
        cols["dist_to_opt_mean"][t] = np.linalg.norm(mean - x_star)
        cols["consensus"][t] = np.sum((x - mean) ** 2) / n
        cols["gme"][t] = np.sum((g @ wg - g.mean(axis=1, keepdims=True)) ** 2)
        cols["loss"][t] = problem.loss(mean[:, 0])
        x_new = x @ wp - cfg.lr * (u @ wg)
        if not np.all(np.isfinite(x_new)) or np.abs(x_new).max() > _DIVERGE_LIMIT:
            raise DivergenceError(t, f"|X| reached {np.abs(x_new).max():.3e}")
        if trace is not None:
            trace.grads.append(u.copy())
            trace.w_params.append(wp.copy())
            trace.w_grads.append(wg.copy())
            trace.x.append(x_new.copy())
        x = x_new
    return MetricsLog(
        step=np.arange(cfg.steps),
        **cols,
        dist_to_opt_w=_trailing_mean(cols["dist_to_opt"], cfg.window),
        consensus_w=_trailing_mean(cols["consensus"], cfg.window),
        gme_w=_trailing_mean(cols["gme"], cfg.window),
        trace=trace,
    )


def run_dsgd(
    problem: Problem,
    topology: Topology,
    w: MixingMatrix,
    cfg: RunConfig,
    *,
    exact_gradients: bool = False,
    record_trace: bool = False,
) -> MetricsLog:
    """Baseline: one fixed mixing matrix for parameters and gradients alike."""
    arr = w.w

    def matrices(t, x, u):
        return arr, arr

    return _simulate(problem, topology, cfg, matrices,
                     exact_gradients=exact_gradients, record_trace=record_trace)


def run_decoupled(
    problem: Problem,
    topology: Topology,
    w_params: MixingMatrix,
    w_grads: MixingMatrix,
    cfg: RunConfig,
    *,
    exact_gradients: bool = False,
    record_trace: bool = False,
) -> MetricsLog:
    """Split mixing: X <- X Wp - eta G Wg."""
    wp, wg = w_params.w, w_grads.w

    def matrices(t, x, u):
        return wp, wg

    return _simulate(problem, topology, cfg, matrices,
                     exact_gradients=exact_gradients, record_trace=record_trace)


def _periodic_gme_schedule(
    problem, topology, cfg, solver_params, exact_gradients, gme_at_mean
):
    """Refresh the optimized matrix every cfg.period steps, MH on alternate steps."""
    mh = metropolis_hastings(topology)
    state = {"w": mh.w}

    def matrices(t, x, u):
        if t % cfg.period == 0:
            if gme_at_mean:
                # exact-gradient, mean-point variant used by the drift checks
                tiled = np.tile(x.mean(axis=1, keepdims=True), (1, topology.n))
                gamma = gram(center_columns(full_gradients(problem, tiled)))
                state["w"] = solve_gme(gamma, topology, solver_params).w
            else:
                scfg = SketchConfig(cfg.sketch_dim, cfg.sketch_seed + t // cfg.period)
                state["w"] = ce_gme(u, topology, scfg, solver_params).w
        if cfg.alternate and t % 2 == 1:
            return mh.w, mh.w
        return state["w"], state["w"]

    return matrices


def run_hadsgd(
    problem: Problem,
    topology: Topology,
    cfg: RunConfig,
    *,
    solver_params: GmeSolverParams | None = None,
    exact_gradients: bool = False,
    gme_at_mean: bool = False,
    record_trace: bool = False,
) -> MetricsLog:
    """Periodically re-optimized mixing from sketched stochastic gradients.

    At steps divisible by cfg.period the mixing matrix is refreshed by
    ce_gme on the current gradient matrix with sketch seed
    cfg.sketch_seed + refresh index. With cfg.alternate the optimized
    matrix is applied on even steps and Metropolis-Hastings on odd steps
    (refreshes always land on even steps). The exact_gradients and
    gme_at_mean flags exist for the analytical drift checks.
    """
    matrices = _periodic_gme_schedule(
        problem, topology, cfg, solver_params, exact_gradients, gme_at_mean
    )
    return _simulate(problem, topology, cfg, matrices,
                     exact_gradients=exact_gradients, record_trace=record_trace)


def run_hadsgd_momentum(
    problem: Problem,
    topology: Topology,
    cfg: RunConfig,
    *,
    solver_params: GmeSolverParams | None = None,
    exact_gradients: bool = False,
    record_trace: bool = False,
) -> MetricsLog:
    """Momentum variant: the buffered direction replaces the raw gradient everywhere.

    m <- beta m + G and U = beta m + G, so the first step applies
    (1 + beta) G. The periodic refresh consumes U; with momentum = 0 this
    reproduces run_hadsgd exactly.
    """
    beta = cfg.momentum
    buf = {"m": None}

    def direction(t, g):
        buf["m"] = g if buf["m"] is None else beta * buf["m"] + g
        return beta * buf["m"] + g

    matrices = _periodic_gme_schedule(
        problem, topology, cfg, solver_params, exact_gradients, False
    )
    return _simulate(problem, topology, cfg, matrices, direction,
                     exact_gradients=exact_gradients, record_trace=record_trace)


def check_update_identity(trace: Trace) -> float:
    """Largest scaled residual of the update identity over a recorded trace.

    Recomputes X^{t+1} = X^t Wp - eta U Wg from the recorded inputs of
    every step and compares against the recorded next iterate. Residuals
    are scaled by the magnitudes entering the identity; a faithful trace
    stays at roundoff level regardless of how accurately the matrices
    themselves are doubly stochastic.
    """
    worst = 0.0
    lr = trace.lr
    for t in range(len(trace.grads)):
        x0, x1 = trace.x[t], trace.x[t + 1]
        u, wp, wg = trace.grads[t], trace.w_params[t], trace.w_grads[t]
        pred = x0 @ wp - lr * (u @ wg)
        scale = 1.0 + np.linalg.norm(x0) + np.linalg.norm(x1) + lr * np.linalg.norm(u)
        worst = max(worst, float(np.linalg.norm(x1 - pred)) / scale)
    return worst
