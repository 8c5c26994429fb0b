"""2-d Helmholtz ``u_xx + u_yy + u = h`` on [-1, 1]^2 with
``u = sin(a1 pi x) sin(a2 pi y)`` and
``h = (1 - (a1 pi)^2 - (a2 pi)^2) sin(a1 pi x) sin(a2 pi y)``."""
from __future__ import annotations

import numpy as np

from ..autodiff import JetSpec
from .base import Collocation, Problem, ProblemSpec, tensor_points

N = 64


class Helmholtz(Problem):
    spec = ProblemSpec(
        name="helmholtz",
        input_names=("x", "y"),
        lower=(-1.0, -1.0),
        upper=(1.0, 1.0),
        grid_shape=(N, N),
        bc_kind="dirichlet",
        linear=True,
        task_names=("alpha1", "alpha2"),
        task_lower=(0.0, 0.0),
        task_upper=(6.0, 6.0),
        jet_spec=JetSpec(2, (0, 1), ((0, 0), (1, 1))),
        freq_factor=4.0,
    )

    def axes(self):
        a = np.linspace(-1.0, 1.0, N)
        return [a, a]

    def grid_points(self):
        return tensor_points(*self.axes())

    def collocation(self):
        ix, iy = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        flat = (ix * N + iy).ravel()
        edge = ((ix == 0) | (ix == N - 1) | (iy == 0) | (iy == N - 1)).ravel()
        return Collocation(pde=flat[~edge], bc=flat[edge], ic=np.array([], dtype=int))

    def sample_theta(self, rng):
        return 6.0 * (1.0 - rng.random(2))

    @staticmethod
    def exact(theta, points):
        a1, a2 = theta
        p = np.asarray(points)
        return np.sin(a1 * np.pi * p[:, 0]) * np.sin(a2 * np.pi * p[:, 1])

    def reference(self, theta):
        return self.exact(theta, self.grid_points()).reshape(N, N)

    def source(self, theta, points):
        a1, a2 = theta
        return (1.0 - (a1 * np.pi) ** 2 - (a2 * np.pi) ** 2) * self.exact(theta, points)

    def bc_target(self, theta, points):
        return self.exact(theta, points)

    def apply_operator(self, jets, u_prev, theta):
        return jets.dd(0) + jets.dd(1) + jets.value
