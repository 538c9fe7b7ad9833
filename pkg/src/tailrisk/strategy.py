"""Importance-sampling strategies: each maps a decision ``(u, theta)`` to a sampling law.

A law exposes ``sample(rng, n, label) -> WeightedSampleBatch`` and
``describe() -> dict``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exptilt import oracle_exptilt
from .risk import WeightedSampleBatch
from .selfstruct import SelfStructLaw, SelfStructParams, default_h_grid, select_h, stretch_factor


@dataclass(frozen=True)
class BaseLaw:
    """Plain sampling from the nominal model (all log-weights zero)."""

    base: object

    def sample(self, rng, n, label="saa"):
        return WeightedSampleBatch.unweighted(self.base.sample(rng, n), label)

    draw = sample

    def describe(self) -> dict:
        return {}


class SAAStrategy:
    name = "saa"

    def __init__(self, dist):
        self.dist = dist
        self._law = BaseLaw(dist)

    def oracle(self, u, theta, rng=None):
        return self._law


class ExpTiltStrategy:
    name = "exptilt"

    def __init__(self, dist, loss):
        self.dist = dist
        self.loss = loss
        # fail fast on models without a usable log-MGF
        oracle_exptilt(0.0, np.full(loss.n_params, 1.0 / loss.n_params), dist, loss)

    def oracle(self, u, theta, rng=None):
        return oracle_exptilt(u, theta, self.dist, self.loss)


class SelfStructStrategy:
    """Self-structuring IS with a fixed ``h`` (or stretch ``s``) or ``h="auto"``.

    With ``"auto"`` every oracle call draws a fresh pilot of ``pilot_size``
    nominal samples and picks ``h`` from ``grid`` by the second-moment criterion.
    """

    name = "selfstruct"

    def __init__(self, dist, loss, beta, h="auto", s=None, grid=None, pilot_size=5000,
                 squared_weight=True):
        self.dist = dist
        self.loss = loss
        self.beta = beta
        self.rho = loss.growth_rate()
        if grid is None:
            # a contraction (s < 1) only moves mass away from the tail
            grid = [h for h in default_h_grid() if stretch_factor(h, beta) >= 1.0] or default_h_grid()
        self.grid = np.asarray(grid, dtype=float)
        self.pilot_size = int(pilot_size)
        self.squared_weight = squared_weight
        if s is not None:
            self._fixed = SelfStructParams.from_stretch(float(s), beta, self.rho)
        elif h == "auto":
            self._fixed = None
        else:
            self._fixed = SelfStructParams(float(h), beta, self.rho)
        self.last_selection = None

    @property
    def adaptive(self) -> bool:
        return self._fixed is None

    def oracle(self, u, theta, rng=None):
        if self._fixed is not None:
            return SelfStructLaw(self.dist, self._fixed)
        if rng is None:
            raise ValueError("automatic h selection needs a random generator for the pilot batch")
        pilot = self.dist.sample(rng, self.pilot_size)
        sel = select_h(u, theta, pilot, self.dist, self.loss, self.beta, self.rho,
                       self.grid, self.squared_weight)
        self.last_selection = sel
        return SelfStructLaw(self.dist, SelfStructParams(sel.h, self.beta, self.rho))


def make_strategy(name: str, dist, loss, beta, **options):
    if name == "saa":
        if options:
            raise ValueError(f"saa takes no options, got {sorted(options)}")
        return SAAStrategy(dist)
    if name == "exptilt":
        if options:
            raise ValueError(f"exptilt takes no options, got {sorted(options)}")
        return ExpTiltStrategy(dist, loss)
    if name == "selfstruct":
        return SelfStructStrategy(dist, loss, beta, **options)
    raise ValueError(f"unknown strategy {name!r}")
