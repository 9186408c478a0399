"""Command-line front end: run experiments, compare two configs, run checks.

Experiments are described by flat text configs, one `key = value` per
line with `#` comments. Exit codes: 0 success, 1 a property check
failed, 2 the config could not be parsed or validated, 3 a run failed
numerically.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass
from math import sqrt

from .checks import run_checks
from .mixing import metropolis_hastings, optimal_spectral_gap_weights, pairing_matrix, validate
from .objectives import (
    make_random_quadratics,
    make_replicated,
    make_two_class_ring,
)
from .simulator import (
    ALGORITHMS,
    DivergenceError,
    MetricsLog,
    RunConfig,
    run_decoupled,
    run_dsgd,
    run_hadsgd,
    run_hadsgd_momentum,
)
from .topology import (
    Topology,
    build_complete,
    build_random_connected,
    build_ring,
    build_torus,
    load_edge_list,
)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "serialize_config",
           "cmd_run", "cmd_compare", "cmd_check", "main"]


class ConfigError(ValueError):
    """The config text is malformed or inconsistent."""


_SCHEMA: dict[str, type] = {
    "name": str, "out": str, "algorithm": str, "weights": str, "topology": str,
    "n": int, "rows": int, "cols": int, "keep_fraction": float, "edge_file": str,
    "objective": str, "d": int, "m": int, "replicate_period": int,
    "noise_var": float, "steps": int, "lr": float, "lr_relative": float,
    "period": int, "sketch_dim": int, "alternate": bool, "momentum": float,
    "window": int, "reps": int, "seed": int,
}
_REQUIRED = ("name", "out", "algorithm", "topology", "objective", "d", "steps", "seed")
_TOPOLOGIES = ("ring", "torus", "complete", "random", "file")
_OBJECTIVES = ("random", "two_class", "replicated")
_BOOL = {"true": True, "false": False}


@dataclass
class ExperimentConfig:
    """Typed key-value pairs in their original order."""

    values: dict

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __getitem__(self, key):
        return self.values[key]

    def __contains__(self, key):
        return key in self.values


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate the flat config format; raises ConfigError on any problem."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, sval = line.partition("=")
        key, sval = key.strip(), sval.strip()
        if not sep or not key or not sval:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        typ = _SCHEMA[key]
        try:
            if typ is bool:
                values[key] = _BOOL[sval.lower()]
            else:
                values[key] = typ(sval)
        except (KeyError, ValueError) as exc:
            raise ConfigError(
                f"line {lineno}: value {sval!r} for {key!r} is not {typ.__name__}"
            ) from exc
    _validate_values(values)
    return ExperimentConfig(values)


def _fail(msg: str):
    raise ConfigError(msg)


def _validate_values(values: dict) -> None:
    for key in _REQUIRED:
        if key not in values:
            _fail(f"missing required key {key!r}")
    if ("lr" in values) == ("lr_relative" in values):
        _fail("exactly one of 'lr' and 'lr_relative' is required")
    if values["algorithm"] not in ALGORITHMS:
        _fail(f"algorithm must be one of {ALGORITHMS}, got {values['algorithm']!r}")
    if values.get("weights", "mh") not in ("mh", "spectral"):
        _fail(f"weights must be 'mh' or 'spectral', got {values['weights']!r}")
    topo = values["topology"]
    if topo not in _TOPOLOGIES:
        _fail(f"topology must be one of {_TOPOLOGIES}, got {topo!r}")
    if topo in ("ring", "complete", "random") and "n" not in values:
        _fail(f"topology {topo!r} needs key 'n'")
    if topo == "torus" and not ("rows" in values and "cols" in values):
        _fail("topology 'torus' needs keys 'rows' and 'cols'")
    if topo == "file" and "edge_file" not in values:
        _fail("topology 'file' needs key 'edge_file'")
    obj = values["objective"]
    if obj not in _OBJECTIVES:
        _fail(f"objective must be one of {_OBJECTIVES}, got {obj!r}")
    if obj == "replicated" and "replicate_period" not in values:
        _fail("objective 'replicated' needs key 'replicate_period'")
    if obj == "two_class" and values.get("n", 16) != 16:
        _fail("objective 'two_class' fixes n = 16")
    if values["algorithm"] == "decoupled" and obj != "two_class":
        _fail("algorithm 'decoupled' is only wired up for objective 'two_class'")
    positive = ("d", "steps", "period", "sketch_dim", "window", "reps", "rows",
                "cols", "m", "replicate_period")
    for key in positive:
        if key in values and values[key] < 1:
            _fail(f"{key} must be >= 1, got {values[key]}")
    if "n" in values and values["n"] < 2:
        _fail(f"n must be >= 2, got {values['n']}")
    if "lr" in values and values["lr"] <= 0:
        _fail(f"lr must be positive, got {values['lr']}")
    if "lr_relative" in values and values["lr_relative"] <= 0:
        _fail(f"lr_relative must be positive, got {values['lr_relative']}")
    if "keep_fraction" in values and not 0.0 < values["keep_fraction"] <= 1.0:
        _fail(f"keep_fraction must be in (0, 1], got {values['keep_fraction']}")
    if "noise_var" in values and values["noise_var"] < 0:
        _fail(f"noise_var must be nonnegative, got {values['noise_var']}")
    if "momentum" in values and not 0.0 <= values["momentum"] < 1.0:
        _fail(f"momentum must be in [0, 1), got {values['momentum']}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Inverse of parse_config up to whitespace; preserves every pair and its order."""
    lines = []
    for key, val in cfg.values.items():
        if isinstance(val, bool):
            sval = "true" if val else "false"
        else:
            sval = repr(val) if isinstance(val, float) else str(val)
        lines.append(f"{key} = {sval}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# experiment assembly

def _build_topology(cfg: ExperimentConfig, data_seed: int) -> Topology:
    kind = cfg["topology"]
    if kind == "ring":
        return build_ring(cfg["n"])
    if kind == "torus":
        return build_torus(cfg["rows"], cfg["cols"])
    if kind == "complete":
        return build_complete(cfg["n"])
    if kind == "random":
        return build_random_connected(cfg["n"], cfg.get("keep_fraction", 0.5), data_seed)
    return load_edge_list(cfg["edge_file"])


def _build_problem(cfg: ExperimentConfig, data_seed: int, default_n: int):
    obj = cfg["objective"]
    d = cfg["d"]
    m = cfg.get("m", d)
    # torus and file topologies fix the node count themselves
    n = cfg.get("n", default_n)
    if obj == "two_class":
        noise = sqrt(cfg.get("noise_var", 0.001))
        return make_two_class_ring(d, data_seed, noise)
    noise = sqrt(cfg.get("noise_var", 0.0))
    if obj == "replicated":
        return make_replicated(n, d, m, cfg["replicate_period"], data_seed, noise)
    return make_random_quadratics(n, d, m, data_seed, noise)


def _run_repetition(cfg: ExperimentConfig, rep: int) -> MetricsLog:
    seed = cfg["seed"]
    data_seed = seed + rep
    topology = _build_topology(cfg, data_seed)
    problem = _build_problem(cfg, data_seed, topology.n)
    if problem.n != topology.n:
        raise ConfigError(
            f"objective has {problem.n} nodes but topology has {topology.n}"
        )
    lr = cfg["lr"] if "lr" in cfg else cfg["lr_relative"] / problem.smoothness
    run_cfg = RunConfig(
        steps=cfg["steps"], lr=lr, algorithm=cfg["algorithm"],
        period=cfg.get("period", 100), sketch_dim=cfg.get("sketch_dim", 64),
        sketch_seed=seed + 20_000 + rep, data_seed=data_seed,
        noise_seed=seed + 10_000 + rep, alternate=cfg.get("alternate", True),
        momentum=cfg.get("momentum", 0.9), window=cfg.get("window", 5),
    )
    algorithm = cfg["algorithm"]
    if algorithm == "hadsgd":
        return run_hadsgd(problem, topology, run_cfg)
    if algorithm == "hadsgd_momentum":
        return run_hadsgd_momentum(problem, topology, run_cfg)
    if cfg.get("weights", "mh") == "spectral":
        fixed = optimal_spectral_gap_weights(topology)
    else:
        fixed = metropolis_hastings(topology)
    if algorithm == "decoupled":
        pairs = pairing_matrix(topology.n)
        if validate(pairs, topology) is not None:
            raise ConfigError("decoupled pairing needs edges (2k, 2k+1) in the graph")
        return run_decoupled(problem, topology, fixed, pairs, run_cfg)
    return run_dsgd(problem, topology, fixed, run_cfg)


def _final_line(name: str, rep: int, log: MetricsLog) -> str:
    return (
        f"{name} rep {rep}: dist_to_opt_w={log.dist_to_opt_w[-1]:.6g} "
        f"consensus_w={log.consensus_w[-1]:.6g} gme_w={log.gme_w[-1]:.6g} "
        f"loss={log.loss[-1]:.6g}"
    )


def cmd_run(config_path: str) -> int:
    """Run every repetition of one config, writing a CSV per repetition."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    os.makedirs(cfg["out"], exist_ok=True)
    try:
        for rep in range(cfg.get("reps", 1)):
            log = _run_repetition(cfg, rep)
            out = os.path.join(cfg["out"], f"{cfg['name']}_rep{rep}.csv")
            log.write_csv(out)
            print(_final_line(cfg["name"], rep, log))
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    except DivergenceError as exc:
        print(f"numeric failure: {exc}")
        return 3
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}")
        return 3
    return 0


_COMPARE_METRICS = ("dist_to_opt_w", "consensus_w", "gme_w")
_SHARED_KEYS = ("topology", "objective", "n", "d", "steps", "seed", "noise_var")


def _tail_means(cfg: ExperimentConfig) -> dict:
    sums = {metric: 0.0 for metric in _COMPARE_METRICS}
    reps = cfg.get("reps", 1)
    for rep in range(reps):
        log = _run_repetition(cfg, rep)
        tail = slice(-max(1, cfg["steps"] // 10), None)
        for metric in _COMPARE_METRICS:
            sums[metric] += float(getattr(log, metric)[tail].mean())
    return {metric: total / reps for metric, total in sums.items()}


def cmd_compare(config_a: str, config_b: str) -> int:
    """Run two configs and print their windowed tail means side by side."""
    try:
        cfg_a, cfg_b = load_config(config_a), load_config(config_b)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    for key in _SHARED_KEYS:
        if cfg_a.get(key) != cfg_b.get(key):
            print(f"note: configs differ on {key!r} "
                  f"({cfg_a.get(key)!r} vs {cfg_b.get(key)!r})")
    try:
        means_a, means_b = _tail_means(cfg_a), _tail_means(cfg_b)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    except (DivergenceError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}")
        return 3
    name_a, name_b = cfg_a["name"], cfg_b["name"]
    print(f"{'metric':<16} {name_a:>14} {name_b:>14}  sign")
    for metric in _COMPARE_METRICS:
        a, b = means_a[metric], means_b[metric]
        sign = "<" if a < b else (">" if a > b else "=")
        print(f"{metric:<16} {a:>14.6g} {b:>14.6g}  {name_a} {sign} {name_b}")
    return 0


def cmd_check(suite: str = "all", corrupt: bool = False) -> int:
    """Run the property suites; nonzero exit and a named line on any failure."""
    results = run_checks(suite, corrupt=corrupt)
    failures = 0
    for result in results:
        print(result)
        failures += not result.passed
    if failures:
        print(f"{failures} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hetmix",
        description="Decentralized SGD with data-aware mixing matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_cmp = sub.add_parser("compare", help="run two configs and compare tails")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_chk = sub.add_parser("check", help="run the numerical property suites")
    p_chk.add_argument("suite", nargs="?", choices=("all", "fast"), default="all")
    p_chk.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "compare":
        return cmd_compare(args.config_a, args.config_b)
    return cmd_check(args.suite, corrupt=args.corrupt)


if __name__ == "__main__":
    raise SystemExit(main())
