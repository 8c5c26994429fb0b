"""Shared problem machinery: instance/dataset types, collocation layout and
the generic assembly of constraint blocks from embedding jets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..autodiff import JetBatch, JetSpec
from ..errors import DimensionMismatch, ZeroReference


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    input_names: tuple
    lower: tuple
    upper: tuple
    grid_shape: tuple
    bc_kind: str            # "dirichlet" | "periodic" | "none"
    linear: bool
    task_names: tuple
    task_lower: tuple
    task_upper: tuple
    jet_spec: JetSpec
    freq_factor: float = 1.0
    picard_iters: int = 1
    has_ic: bool = False

    @property
    def input_dim(self) -> int:
        return len(self.input_names)

    @property
    def task_dim(self) -> int:
        return len(self.task_names)


@dataclass
class Collocation:
    """Row indices into the flattened solution grid.

    ``bc`` holds Dirichlet points; for periodic problems ``bc`` and
    ``bc_partner`` pair the left and right ends of the domain.
    """

    pde: np.ndarray
    bc: np.ndarray
    ic: np.ndarray
    bc_partner: np.ndarray | None = None

    @property
    def sizes(self) -> dict:
        return {"PDE": len(self.pde), "BC": len(self.bc), "IC": len(self.ic)}


@dataclass
class PdeInstance:
    """One task of a family.  ``reference`` is the solution on the grid and is
    absent on instances handed to adaptation."""

    problem: "Problem"
    theta: np.ndarray
    instance_id: int = 0
    reference: np.ndarray | None = None

    def stripped(self) -> "PdeInstance":
        return replace(self, reference=None)

    def source(self, points) -> np.ndarray:
        return self.problem.source(self.theta, points)

    def bc_target(self, points) -> np.ndarray:
        return self.problem.bc_target(self.theta, points)

    def initial(self, points) -> np.ndarray:
        return self.problem.initial(self.theta, points)


class Problem:
    """A PDE family on a fixed tensor grid.

    Subclasses define ``spec``, ``axes``, ``sample_theta``, ``reference``,
    ``source`` and ``apply_operator``; targets default to zero.
    """

    spec: ProblemSpec

    # geometry --------------------------------------------------------------
    def axes(self) -> list:
        raise NotImplementedError

    def grid_points(self) -> np.ndarray:
        """Flattened grid points, row-major over ``spec.grid_shape``."""
        raise NotImplementedError

    def collocation(self) -> Collocation:
        raise NotImplementedError

    # instances -------------------------------------------------------------
    def sample_theta(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def reference(self, theta) -> np.ndarray:
        raise NotImplementedError

    def make_instance(self, theta, instance_id: int = 0, with_reference: bool = True) -> PdeInstance:
        theta = np.asarray(theta, dtype=np.float64)
        ref = self.reference(theta) if with_reference else None
        return PdeInstance(self, theta, instance_id, ref)

    # targets ---------------------------------------------------------------
    def source(self, theta, points) -> np.ndarray:
        return np.zeros(len(points))

    def bc_target(self, theta, points) -> np.ndarray:
        return np.zeros(len(points))

    def initial(self, theta, points) -> np.ndarray:
        return np.zeros(len(points))

    # operator --------------------------------------------------------------
    def apply_operator(self, jets: JetBatch, u_prev, theta):
        """Differential operator applied feature-wise at PDE points.

        For nonlinear problems the nonlinear coefficient is frozen at
        ``u_prev`` (values at the same points).
        """
        raise NotImplementedError

    def needs_linearization(self) -> bool:
        return not self.spec.linear

    def initial_guess(self, theta, points, policy: str) -> np.ndarray:
        """Starting field for Picard iteration at the given points."""
        if policy == "zero":
            return np.zeros(len(points))
        if policy == "ic_extension":
            x_only = np.array(points, dtype=np.float64, copy=True)
            t_axis = self.spec.input_names.index("t")
            x_only[:, t_axis] = self.spec.lower[t_axis]
            return self.initial(theta, x_only)
        raise ValueError(f"unknown picard_init {policy!r}")

    def blocks(self, jets: JetBatch, theta, u_prev=None, colloc: Collocation | None = None):
        """Unweighted ``(X, y)`` constraint blocks keyed ``PDE``/``BC``/``IC``.

        ``jets`` are taken at every grid point; ``u_prev`` (nonlinear only)
        holds the frozen field at the PDE points.
        """
        colloc = colloc or self.collocation()
        pts = self.grid_points()
        out = {}
        jp = jets.rows(colloc.pde)
        out["PDE"] = (self.apply_operator(jp, u_prev, theta), self.source(theta, pts[colloc.pde]))
        if len(colloc.bc):
            if colloc.bc_partner is not None:
                xb = jets.value[colloc.bc] - jets.value[colloc.bc_partner]
                yb = np.zeros(len(colloc.bc))
            else:
                xb = jets.value[colloc.bc]
                yb = self.bc_target(theta, pts[colloc.bc])
            out["BC"] = (xb, yb)
        if len(colloc.ic):
            out["IC"] = (jets.value[colloc.ic], self.initial(theta, pts[colloc.ic]))
        return out

    # plain-MLP inputs ------------------------------------------------------
    def task_inputs(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64)


def tensor_points(*axes) -> np.ndarray:
    """Row-major (first axis slowest) flattening of the tensor grid."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def rel_l2(pred, ref) -> float:
    """``||pred - ref||_2 / ||ref||_2`` over all grid entries."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise DimensionMismatch(f"shape mismatch {pred.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref.ravel())
    if denom == 0.0:
        raise ZeroReference("reference field is identically zero")
    return float(np.linalg.norm((pred - ref).ravel()) / denom)


@dataclass
class Dataset:
    problem: Problem
    instances: list
    seed: int
    options: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.problem.spec.name

    def __len__(self):
        return len(self.instances)

    def split(self, K: int, seed: int = 0):
        """Seen/unseen instance indices: a seeded permutation, first ``K`` seen."""
        n = len(self.instances)
        if not 1 <= K < n:
            raise ValueError(f"K={K} must be in [1, {n - 1}]")
        order = np.random.default_rng(seed).permutation(n)
        return sorted(order[:K].tolist()), sorted(order[K:].tolist())

    def subset(self, indices) -> list:
        return [self.instances[i] for i in indices]
