"""1-d Poisson: ``u_xx = h`` on [-10, 10] with
``u = sin(w1 x) + sin(w2 x) - 0.1 x``."""
from __future__ import annotations

import numpy as np

from ..autodiff import JetSpec
from .base import Collocation, Problem, ProblemSpec, tensor_points


class Poisson(Problem):
    spec = ProblemSpec(
        name="poisson",
        input_names=("x",),
        lower=(-10.0,),
        upper=(10.0,),
        grid_shape=(201,),
        bc_kind="dirichlet",
        linear=True,
        task_names=("omega1", "omega2"),
        task_lower=(0.0, 0.0),
        task_upper=(1.0, 2.0),
        jet_spec=JetSpec(1, (0,), ((0, 0),)),
        freq_factor=2.0,
    )

    def axes(self):
        return [np.linspace(-10.0, 10.0, 201)]

    def grid_points(self):
        return tensor_points(*self.axes())

    def collocation(self):
        n = self.spec.grid_shape[0]
        return Collocation(pde=np.arange(1, n - 1), bc=np.array([0, n - 1]), ic=np.array([], dtype=int))

    def sample_theta(self, rng):
        # (0, 1] and (0, 2]
        return np.array([1.0 - rng.random(), 2.0 * (1.0 - rng.random())])

    @staticmethod
    def exact(theta, x):
        w1, w2 = theta
        return np.sin(w1 * x) + np.sin(w2 * x) - 0.1 * x

    def reference(self, theta):
        return self.exact(theta, self.axes()[0])

    def source(self, theta, points):
        w1, w2 = theta
        x = np.asarray(points)[:, 0]
        return -w1 ** 2 * np.sin(w1 * x) - w2 ** 2 * np.sin(w2 * x)

    def bc_target(self, theta, points):
        return self.exact(theta, np.asarray(points)[:, 0])

    def apply_operator(self, jets, u_prev, theta):
        return jets.dd(0)
