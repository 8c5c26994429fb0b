"""Viscous Burgers' equation families.

``burgers-sine``
    ``u_t + u u_x - gamma u_xx = 0`` on [-1, 1] x [0, 1],
    ``u(x, 0) = -sin(pi x)``, ``u(+-1, t) = 0``; gamma varies per instance.
``burgers-family``
    ``u_t + u u_x - gamma u_xx = h`` on [0, 1] x [0, 0.5] with periodic
    ``u(0, t) = u(1, t)``, gamma = 0.005 and a random five-mode source
    ``h = sum_j A_j sin(w_j t + 2 pi l_j x / 6 + phi_j)``; ``u(x, 0) = h(x, 0)``
    (optionally plus ``eps sin(2 pi k x)``).

The source is used exactly as written even though the ``x / 6`` phase makes
it non-periodic on the unit interval; the reference solver takes the mean of
the one-sided limits at the wrap point.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import JetSpec, value_of
from ..errors import MissingLinearization, NumericalError
from .base import Collocation, Problem, ProblemSpec, tensor_points
from .cole_hopf import cole_hopf_grid
from .periodic_burgers import solve_periodic_burgers


def _txgrid_collocation(nt: int, nx: int, periodic: bool) -> Collocation:
    it, ix = np.meshgrid(np.arange(nt), np.arange(nx), indexing="ij")
    flat = (it * nx + ix)
    later = it > 0
    interior = later & (ix > 0) & (ix < nx - 1)
    ic = flat[0]
    if periodic:
        return Collocation(pde=flat[interior], bc=flat[1:, 0], ic=ic, bc_partner=flat[1:, nx - 1])
    edge = later & ((ix == 0) | (ix == nx - 1))
    return Collocation(pde=flat[interior], bc=flat[edge], ic=ic)


class _BurgersBase(Problem):
    """Grid points are ordered time-major with columns ``(x, t)``."""

    def axes(self):
        (x0, t0), (x1, t1) = self.spec.lower, self.spec.upper
        nt, nx = self.spec.grid_shape
        return [np.linspace(x0, x1, nx), np.linspace(t0, t1, nt)]

    def grid_points(self):
        x, t = self.axes()
        pts = tensor_points(t, x)
        return pts[:, ::-1].copy()

    def gamma(self, theta) -> float:
        raise NotImplementedError

    def apply_operator(self, jets, u_prev, theta):
        if u_prev is None:
            raise MissingLinearization("Burgers rows need the frozen advection field")
        u = u_prev[:, None] if np.ndim(value_of(u_prev)) == 1 else u_prev
        return jets.d(1) + u * jets.d(0) - self.gamma(theta) * jets.dd(0)


class BurgersSine(_BurgersBase):
    spec = ProblemSpec(
        name="burgers-sine",
        input_names=("x", "t"),
        lower=(-1.0, 0.0),
        upper=(1.0, 1.0),
        grid_shape=(51, 129),
        bc_kind="dirichlet",
        linear=False,
        task_names=("gamma",),
        task_lower=(0.001,),
        task_upper=(0.05,),
        jet_spec=JetSpec(2, (0, 1), ((0, 0),)),
        freq_factor=1.0,
        picard_iters=4,
        has_ic=True,
    )

    def collocation(self):
        return _txgrid_collocation(*self.spec.grid_shape, periodic=False)

    def sample_theta(self, rng):
        return np.array([rng.uniform(0.001, 0.05)])

    def gamma(self, theta):
        return float(theta[0])

    def initial(self, theta, points):
        return -np.sin(np.pi * np.asarray(points)[:, 0])

    def reference(self, theta):
        x, t = self.axes()
        u = cole_hopf_grid(x, t, self.gamma(theta))
        u[:, 0] = 0.0
        u[:, -1] = 0.0
        u[0] = -np.sin(np.pi * x)
        return u


N_MODES = 5


class BurgersFamily(_BurgersBase):
    """Theta layout: ``A(5), w(5), l(5), phi(5), eps, k``."""

    GAMMA = 0.005

    spec = ProblemSpec(
        name="burgers-family",
        input_names=("x", "t"),
        lower=(0.0, 0.0),
        upper=(1.0, 0.5),
        grid_shape=(26, 51),
        bc_kind="periodic",
        linear=False,
        task_names=tuple([f"A{j}" for j in range(1, 6)] + [f"w{j}" for j in range(1, 6)]
                         + [f"l{j}" for j in range(1, 6)] + [f"phi{j}" for j in range(1, 6)]
                         + ["eps", "k"]),
        task_lower=(-0.8,) * 5 + (-2.0,) * 5 + (0.0,) * 5 + (-np.pi,) * 5 + (0.0, 1.0),
        task_upper=(0.8,) * 5 + (2.0,) * 5 + (4.0,) * 5 + (np.pi,) * 5 + (0.1, 3.0),
        jet_spec=JetSpec(2, (0, 1), ((0, 0),)),
        freq_factor=1.0,
        picard_iters=8,
        has_ic=True,
    )

    def __init__(self, perturb: bool = False, refinement: int = 8,
                 convergence_tol: float = 1e-4, max_refinement: int = 64):
        self.perturb = perturb
        self.refinement = refinement
        self.convergence_tol = convergence_tol
        self.max_refinement = max_refinement

    def collocation(self):
        return _txgrid_collocation(*self.spec.grid_shape, periodic=True)

    def sample_theta(self, rng):
        amp = rng.uniform(-0.8, 0.8, N_MODES)
        omega = rng.uniform(-2.0, 2.0, N_MODES)
        ell = rng.integers(0, 5, N_MODES).astype(np.float64)
        phase = rng.uniform(-np.pi, np.pi, N_MODES)
        if self.perturb:
            eps, k = rng.uniform(0.0, 0.1), float(rng.integers(1, 4))
        else:
            eps, k = 0.0, 1.0
        return np.concatenate([amp, omega, ell, phase, [eps, k]])

    def gamma(self, theta):
        return self.GAMMA

    @staticmethod
    def unpack(theta):
        theta = np.asarray(theta, dtype=np.float64)
        return (theta[0:5], theta[5:10], theta[10:15], theta[15:20], theta[20], theta[21])

    @classmethod
    def source_xt(cls, theta, x, t):
        amp, omega, ell, phase, _, _ = cls.unpack(theta)
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape)
        arg = omega[:, None] * t[None, :] + 2.0 * np.pi * ell[:, None] * x[None, :] / 6.0 + phase[:, None]
        return (amp[:, None] * np.sin(arg)).sum(axis=0)

    @classmethod
    def initial_x(cls, theta, x):
        _, _, _, _, eps, k = cls.unpack(theta)
        x = np.asarray(x, dtype=np.float64)
        return cls.source_xt(theta, x, 0.0) + eps * np.sin(2.0 * np.pi * k * x)

    def source(self, theta, points):
        p = np.asarray(points)
        return self.source_xt(theta, p[:, 0], p[:, 1])

    def initial(self, theta, points):
        return self.initial_x(theta, np.asarray(points)[:, 0])

    def solver_inputs(self, theta):
        """Source and initial data on the periodic cell, with the wrap point
        set to the mean of the one-sided limits."""
        amp, omega, ell, phase, eps, k = self.unpack(theta)
        cache = {}

        def basis(x):
            key = (len(x), float(x[-1]))
            if cache.get("key") != key:
                kx = 2.0 * np.pi * ell[:, None] * x[None, :] / 6.0
                kx1 = 2.0 * np.pi * ell / 6.0
                c, s = np.cos(kx), np.sin(kx)
                c[:, 0] = 0.5 * (1.0 + np.cos(kx1))
                s[:, 0] = 0.5 * np.sin(kx1)
                cache.update(key=key, c=amp[:, None] * c, s=amp[:, None] * s)
            return cache["c"], cache["s"]

        def source(x, t):
            c, s = basis(x)
            arg = omega * t + phase
            return np.sin(arg) @ c + np.cos(arg) @ s

        def initial(x):
            return source(x, 0.0) + eps * np.sin(2.0 * np.pi * k * x)

        return initial, source

    def solve(self, theta, refinement: int) -> np.ndarray:
        initial, source = self.solver_inputs(theta)
        x, t = self.axes()
        return solve_periodic_burgers(initial, source, self.GAMMA, len(x), t, refinement)

    def reference(self, theta):
        return reference_solve_family(self, theta)[0]


def reference_solve_family(problem: BurgersFamily, theta, refinement: int | None = None):
    """Solve at ``r`` and ``2r`` refinement, doubling until the downsampled
    solutions differ by at most ``problem.convergence_tol`` (relative L2).

    Returns ``(solution, refinement_used, last_change)``; the finer solve
    is returned.
    """
    r = refinement or problem.refinement
    coarse = problem.solve(theta, r)
    while True:
        fine = problem.solve(theta, 2 * r)
        change = float(np.linalg.norm(fine - coarse) / max(np.linalg.norm(fine), 1e-300))
        if change <= problem.convergence_tol or np.linalg.norm(fine) == 0.0:
            return fine, 2 * r, change
        if 2 * r >= problem.max_refinement:
            raise NumericalError(
                f"reference solve did not self-converge (change {change:.2e} at refinement {2 * r})")
        coarse, r = fine, 2 * r
