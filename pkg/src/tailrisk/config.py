"""Experiment configuration: one JSON document, validated up front.

Bundled instances (``"instance": "portfolio2"``) supply the model, loss,
constraint and tail level; explicit keys in the document override them.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import dist as dist_mod
from . import loss as loss_mod

TOP_KEYS = {
    "instance", "distribution", "loss", "constraint", "beta", "lambda", "theta", "u",
    "strategy", "strategies", "solver", "n", "replications", "betas", "eps_rel", "alpha",
    "n_max", "reference_n", "seed", "out", "verbose",
}
STRATEGY_KEYS = {
    "saa": {"name", "label"},
    "exptilt": {"name", "label"},
    "selfstruct": {"name", "label", "h", "s", "pilot_size", "grid", "squared_weight"},
}
SOLVER_KEYS = {
    "ra": {"name", "mode", "n1", "growth", "K_tol", "max_epochs", "window", "max_iter"},
    "sa": {"name", "steps", "c", "gamma", "period", "margin"},
}
CONSTRAINT_KEYS = {"mu", "target", "nonneg", "sum_to_one"}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source document when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class StrategyConfig:
    name: str
    label: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolverConfig:
    name: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    dist: object
    loss: object
    constraint: loss_mod.DecisionConstraint
    beta: float
    lam: float
    theta: np.ndarray | None
    u: float | None
    strategies: tuple
    solver: SolverConfig
    n: int
    replications: int
    betas: tuple
    eps_rel: tuple
    alpha: float
    n_max: int
    reference_n: int
    seed: int
    out: str | None
    verbose: bool
    instance: dict | None = None


def bundled_instance(name: str) -> dict:
    """A bundled instance with its shipped grid-oracle value."""
    if not re.fullmatch(r"[A-Za-z0-9_]+", name):
        raise ConfigError(f"invalid instance name {name!r}")
    path = resources.files("tailrisk") / "data" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown instance {name!r}")
    return json.loads(path.read_text())


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, row in enumerate(text.splitlines(), start=1):
        if pat.search(row):
            return i
    return None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text, overrides, source=str(path))


def parse_config(text: str, overrides: dict | None = None, source: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config; ``overrides`` replace top-level keys."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object", 1, source)
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    try:
        return _build(doc, text)
    except ConfigError as exc:
        exc.source = source
        raise
    except (ValueError, TypeError, NotImplementedError) as exc:
        raise ConfigError(str(exc), None, source) from None


def _fail(text, key, message):
    raise ConfigError(message, _line_of(text, key))


def _check_keys(text, obj, allowed, what):
    if not isinstance(obj, dict):
        raise ConfigError(f"{what} must be an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        _fail(text, unknown[0], f"unknown key {unknown[0]!r} in {what}")


def _number(text, doc, key, default, kind=float, positive=True):
    if key not in doc:
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(text, key, f"{key} must be a number")
    if kind is int:
        if float(val) != int(val):
            _fail(text, key, f"{key} must be an integer")
        val = int(val)
    if positive and not val > 0:
        _fail(text, key, f"{key} must be positive")
    return kind(val)


def _strategy(text, entry) -> StrategyConfig:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError("each strategy needs a name", _line_of(text, "strategies") or _line_of(text, "strategy"))
    name = entry["name"]
    if name not in STRATEGY_KEYS:
        _fail(text, "name", f"unknown strategy {name!r}")
    _check_keys(text, entry, STRATEGY_KEYS[name], f"strategy {name!r}")
    opts = {k: v for k, v in entry.items() if k not in ("name", "label")}
    if "h" in opts and opts["h"] != "auto":
        if isinstance(opts["h"], bool) or not isinstance(opts["h"], (int, float)) or not opts["h"] > 0:
            _fail(text, "h", "h must be a positive number or \"auto\"")
    if "s" in opts and (isinstance(opts["s"], bool) or not isinstance(opts["s"], (int, float)) or not opts["s"] > 0):
        _fail(text, "s", "s must be a positive number")
    if "h" in opts and "s" in opts:
        _fail(text, "s", "give either h or s, not both")
    return StrategyConfig(name, str(entry.get("label", name)), opts)


def _solver(text, entry) -> SolverConfig:
    if entry is None:
        return SolverConfig("ra", {})
    if isinstance(entry, str):
        entry = {"name": entry}
    name = entry.get("name") if isinstance(entry, dict) else None
    if name not in SOLVER_KEYS:
        _fail(text, "solver", f"unknown solver {name!r}")
    _check_keys(text, entry, SOLVER_KEYS[name], f"solver {name!r}")
    return SolverConfig(name, {k: v for k, v in entry.items() if k != "name"})


def _build(doc: dict, text: str) -> ExperimentConfig:
    _check_keys(text, doc, TOP_KEYS, "config")
    inst = None
    if "instance" in doc:
        inst = bundled_instance(str(doc["instance"]))
    base = dict(inst or {})
    for key in ("distribution", "loss", "constraint", "beta"):
        if key in doc:
            base[key] = doc[key]
    for key in ("distribution", "loss"):
        if key not in base:
            raise ConfigError(f"missing {key!r} (give it explicitly or name a bundled instance)")
    try:
        model = dist_mod.from_config(base["distribution"])
    except (ValueError, TypeError) as exc:
        _fail(text, "distribution", str(exc))
    try:
        loss = loss_mod.from_config(base["loss"])
    except (ValueError, TypeError) as exc:
        _fail(text, "loss", str(exc))
    if loss.dim != model.dim:
        _fail(text, "loss", f"loss expects dimension {loss.dim}, distribution has {model.dim}")

    con = base.get("constraint") or {}
    _check_keys(text, con, CONSTRAINT_KEYS, "constraint")
    try:
        constraint = loss_mod.DecisionConstraint(con.get("mu"), con.get("target"),
                                                 bool(con.get("nonneg", True)),
                                                 bool(con.get("sum_to_one", True)))
    except ValueError as exc:
        _fail(text, "constraint", str(exc))
    if constraint.mu is not None and constraint.mu.shape != (loss.n_params,):
        _fail(text, "mu", f"mu must have length {loss.n_params}")

    beta = base.get("beta")
    if beta is None:
        _fail(text, "beta", "beta is required")
    beta = _number(text, base, "beta", None)
    if not beta < 1:
        _fail(text, "beta", "beta must lie in (0, 1)")
    lam = _number(text, doc, "lambda", 0.0, positive=False)
    if not 0.0 <= lam <= 1.0:
        _fail(text, "lambda", "lambda must lie in [0, 1]")

    theta = None
    if "theta" in doc:
        theta = np.asarray(doc["theta"], dtype=float)
        if theta.shape != (loss.n_params,):
            _fail(text, "theta", f"theta must have length {loss.n_params}")
    u = _number(text, doc, "u", None, positive=False) if doc.get("u") is not None else None

    if "strategy" in doc and "strategies" in doc:
        _fail(text, "strategies", "give either strategy or strategies, not both")
    raw = doc.get("strategies", [doc["strategy"]] if "strategy" in doc else ["saa"])
    if not isinstance(raw, list) or not raw:
        _fail(text, "strategies", "strategies must be a non-empty list")
    strategies = tuple(_strategy(text, e) for e in raw)
    labels = [s.label for s in strategies]
    if len(set(labels)) != len(labels):
        _fail(text, "strategies", "strategy labels must be unique (set \"label\")")

    betas = doc.get("betas", [beta])
    if not isinstance(betas, list) or not betas or any(
            isinstance(b, bool) or not isinstance(b, (int, float)) or not 0 < b < 1 for b in betas):
        _fail(text, "betas", "betas must be a non-empty list of numbers in (0, 1)")
    eps = doc.get("eps_rel", [0.01])
    eps = eps if isinstance(eps, list) else [eps]
    if not eps or any(isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0 for e in eps):
        _fail(text, "eps_rel", "eps_rel must be a positive number or a list of them")
    alpha = _number(text, doc, "alpha", 0.05)
    if not alpha < 1:
        _fail(text, "alpha", "alpha must lie in (0, 1)")
    seed = _number(text, doc, "seed", 0, kind=int, positive=False)
    if seed < 0:
        _fail(text, "seed", "seed must be non-negative")

    return ExperimentConfig(
        dist=model, loss=loss, constraint=constraint, beta=beta, lam=lam, theta=theta, u=u,
        strategies=strategies, solver=_solver(text, doc.get("solver")),
        n=_number(text, doc, "n", 10_000, kind=int),
        replications=_number(text, doc, "replications", 100, kind=int),
        betas=tuple(float(b) for b in betas),
        eps_rel=tuple(sorted((float(e) for e in eps), reverse=True)),
        alpha=alpha,
        n_max=_number(text, doc, "n_max", 2**21, kind=int),
        reference_n=_number(text, doc, "reference_n", 10**7, kind=int),
        seed=seed,
        out=doc.get("out"),
        verbose=bool(doc.get("verbose", False)),
        instance=inst,
    )
