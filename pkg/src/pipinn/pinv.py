"""Closed-form output-head adaptation.

The head ``w`` of a frozen trunk is fitted to an unseen instance by
stacking weighted PDE, BC and IC constraint rows into ``X w = y`` and solving
``(lambda_pi I + X^T X) w = X^T y``.  Nonlinear operators are handled by
Picard iteration: the nonlinear coefficient is frozen at the previous
iterate's field and the linear solve repeated a fixed number of times.

:func:`solve_head` is written with the :mod:`autodiff` dispatch helpers and
therefore also runs on tape variables; the trainer differentiates through it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import JetBatch
from .errors import NonFiniteIteration
from .problems.base import Collocation, PdeInstance, Problem

TAGS = ("PDE", "BC", "IC")


@dataclass
class AdaptConfig:
    lambda_pde: float = 1.0
    lambda_bc: float = 1.0
    lambda_ic: float = 1.0
    lambda_pi: float = 0.0
    picard_iters: int = 1
    picard_init: str = "ic_extension"

    def __post_init__(self):
        for name in ("lambda_pde", "lambda_bc", "lambda_ic"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_pi < 0:
            raise ValueError("lambda_pi must be nonnegative")
        if self.picard_iters < 1:
            raise ValueError("picard_iters must be >= 1")
        if self.picard_init not in ("zero", "ic_extension"):
            raise ValueError(f"unknown picard_init {self.picard_init!r}")

    @classmethod
    def for_problem(cls, problem: Problem, **kw) -> "AdaptConfig":
        kw.setdefault("picard_iters", problem.spec.picard_iters)
        return cls(**kw)

    def weights(self) -> dict:
        return {"PDE": self.lambda_pde, "BC": self.lambda_bc, "IC": self.lambda_ic}


@dataclass
class AssembledSystem:
    X: np.ndarray
    y: np.ndarray
    row_tags: np.ndarray


@dataclass
class AdaptedHead:
    w: np.ndarray
    residual_norms: dict = field(default_factory=dict)
    picard_history: list = field(default_factory=list)
    prediction: np.ndarray | None = None


@dataclass
class Features:
    """Embedding jets of a frozen trunk at every grid point of a problem."""

    problem: Problem
    jets: JetBatch
    colloc: Collocation

    @property
    def pde_values(self):
        return self.jets.value[self.colloc.pde]

    def predict(self, w) -> np.ndarray:
        return np.asarray(ad.value_of(self.jets.value @ w)).reshape(self.problem.spec.grid_shape)


def features(problem: Problem, trunk) -> Features:
    """Evaluate ``trunk.jets`` once on the full grid."""
    jets = trunk.jets(problem.grid_points(), problem.spec.jet_spec)
    return Features(problem, jets, problem.collocation())


def _stack_blocks(blocks: dict, weights: dict):
    xs, ys, tags = [], [], []
    for tag in TAGS:
        if tag not in blocks:
            continue
        Xb, yb = blocks[tag]
        lam = weights[tag]
        xs.append(Xb * lam)
        ys.append(yb * lam)
        tags.extend([tag] * len(yb))
    return ad.concat(xs, axis=0), ad.concat(ys, axis=0), np.array(tags)


def assemble(instance: PdeInstance, trunk, cfg: AdaptConfig, current_u=None,
             feats: Features | None = None) -> AssembledSystem:
    """Weighted constraint system; ``current_u`` is the frozen field at the
    PDE collocation points (required for nonlinear problems)."""
    feats = feats or features(instance.problem, trunk)
    blocks = instance.problem.blocks(feats.jets, instance.theta, current_u, feats.colloc)
    X, y, tags = _stack_blocks(blocks, cfg.weights())
    return AssembledSystem(np.asarray(X), np.asarray(y), tags)


def solve_head(problem: Problem, theta, feats: Features, weights: dict, lambda_pi,
               iters: int = 1, init: str = "ic_extension", history: list | None = None):
    """Head weights after ``iters`` Picard sweeps (one solve when linear).

    ``weights`` maps tags to row weights; weights, ``lambda_pi`` and the jets
    may be tape variables.
    """
    colloc = feats.colloc
    nonlinear = not problem.spec.linear
    u_prev = None
    if nonlinear:
        u_prev = problem.initial_guess(theta, problem.grid_points()[colloc.pde], init)
    pde_vals = feats.jets.value[colloc.pde]
    w_prev = np.zeros(feats.jets.width)
    w = None
    for _ in range(iters):
        blocks = problem.blocks(feats.jets, theta, u_prev, colloc)
        X, y, _ = _stack_blocks(blocks, weights)
        w = ad.ridge_solve(X, y, lambda_pi)
        wv = ad.value_of(w)
        if history is not None:
            history.append(float(np.linalg.norm(wv - w_prev)))
        w_prev = wv
        if nonlinear:
            u_prev = pde_vals @ w
            if not np.all(np.isfinite(ad.value_of(u_prev))):
                raise NonFiniteIteration("Picard iterate contains non-finite values")
    return w


def residual_report(w, instance: PdeInstance, trunk=None, cfg: AdaptConfig | None = None,
                    feats: Features | None = None) -> dict:
    """Unweighted L2 norms of the PDE/BC/IC violations of head ``w``.

    For nonlinear problems the operator is evaluated at the field given by
    ``w`` itself, i.e. the true nonlinear residual.
    """
    feats = feats or features(instance.problem, trunk)
    w = np.asarray(w)
    u = feats.pde_values @ w if not instance.problem.spec.linear else None
    blocks = instance.problem.blocks(feats.jets, instance.theta, u, feats.colloc)
    return {tag: float(np.linalg.norm(Xb @ w - yb)) for tag, (Xb, yb) in blocks.items()}


def _adapt(instance: PdeInstance, trunk, cfg: AdaptConfig, feats, iters: int) -> AdaptedHead:
    problem = instance.problem
    feats = feats or features(problem, trunk)
    history: list = []
    w = solve_head(problem, instance.theta, feats, cfg.weights(), cfg.lambda_pi,
                   iters, cfg.picard_init, history)
    w = np.asarray(w)
    return AdaptedHead(w=w, residual_norms=residual_report(w, instance, feats=feats),
                       picard_history=history, prediction=feats.predict(w))


def adapt(instance: PdeInstance, trunk, cfg: AdaptConfig, feats: Features | None = None) -> AdaptedHead:
    """Closed-form head for ``instance``: one solve for linear problems,
    ``cfg.picard_iters`` Picard sweeps otherwise.

    The instance's reference grid, if any, is never consulted.
    """
    iters = cfg.picard_iters if not instance.problem.spec.linear else 1
    return _adapt(instance, trunk, cfg, feats, iters)


def adapt_linear(instance: PdeInstance, trunk, cfg: AdaptConfig, feats: Features | None = None) -> AdaptedHead:
    if not instance.problem.spec.linear:
        raise ValueError(f"{instance.problem.spec.name} is nonlinear; use adapt_nonlinear")
    return _adapt(instance, trunk, cfg, feats, 1)


def adapt_nonlinear(instance: PdeInstance, trunk, cfg: AdaptConfig, feats: Features | None = None) -> AdaptedHead:
    """Exactly ``cfg.picard_iters`` undamped Picard sweeps, no early stop."""
    return _adapt(instance, trunk, cfg, feats, cfg.picard_iters)
