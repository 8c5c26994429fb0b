import numpy as np
import pytest

from pipinn import autodiff as ad
from pipinn import linalg
from pipinn import network as nw
from pipinn import pinv
from pipinn.autodiff import DenseLayer, JetSpec, Stack, Var
from pipinn.errors import DimensionMismatch, NonFiniteLoss, UnsupportedOperator
from pipinn.problems.base import PdeInstance
from pipinn.training import pil_loss, softplus_inv

from oracles import central_diff, grads_close, tiny_burgers, tiny_poisson


# -- tape basics ------------------------------------------------------------

def test_elementwise_ops_match_fd():
    rng = np.random.default_rng(0)
    x0 = rng.uniform(0.5, 1.5, 5)

    def f(x):
        v = x if isinstance(x, Var) else x
        return ad.vsum(ad.sin(v) * ad.exp(v) / (1.0 + ad.tanh(v)) + ad.sqrt(v) * ad.log(v)
                       + ad.softplus(v) ** 3 - ad.cos(v))

    rep = ad.grad_params(lambda P: f(P["x"]), {"x": x0})
    num = central_diff(lambda x: float(f(x)), x0, 1e-6)
    ok, worst = grads_close(rep.grads["x"], num, rel=1e-7)
    assert ok, worst


def test_matmul_broadcast_and_indexing():
    rng = np.random.default_rng(1)
    A0, b0 = rng.standard_normal((4, 3)), rng.standard_normal(3)
    idx = np.array([0, 2, 2, 3])   # repeated row must accumulate

    def f(A, b):
        y = (A @ b)[idx] + ad.vsum(A, axis=0)[1]
        return ad.vsum(y * y) + ad.mean(ad.concat([A.T @ A, A.T @ A], axis=0))

    rep = ad.grad_params(lambda P: f(P["A"], P["b"]), {"A": A0, "b": b0})
    numA = central_diff(lambda A: float(f(A, b0)), A0, 1e-6)
    numb = central_diff(lambda b: float(f(A0, b)), b0, 1e-6)
    assert grads_close(rep.grads["A"], numA, rel=1e-7)[0]
    assert grads_close(rep.grads["b"], numb, rel=1e-7)[0]


def test_constant_loss_gives_zero_gradient():
    rep = ad.grad_params(lambda P: 3.0 + 0.0 * ad.vsum(P["a"]), {"a": np.ones(4), "b": np.ones(2)})
    assert np.array_equal(rep.flat, np.zeros(6))
    assert rep.names == ["a", "b"]


def test_non_finite_loss_raises():
    with pytest.raises(NonFiniteLoss):
        ad.grad_params(lambda P: ad.log(P["a"] - 1.0), {"a": np.ones(())})


# -- jets -------------------------------------------------------------------

def test_single_neuron_sine_jet():
    stack = Stack([DenseLayer(np.array([[2.0]]), np.zeros(1), "sine")],
                  shift=np.zeros(1), spread=np.ones(1))
    (jet,) = ad.propagate_jets(stack, [0.0], JetSpec(1, (0,), ((0, 0),)))
    assert jet.value == 0.0 and jet.first[0] == 2.0 and jet.second[(0, 0)] == 0.0


def _random_net(variant="concat_skip", input_dim=2, nodes=6, F=1.5, seed=3, activation="sine"):
    cfg = nw.NetConfig(variant, input_dim, 2, nodes, F, activation, seed,
                       (-1.0,) * input_dim, (2.0,) * input_dim)
    params = nw.init(cfg)
    rng = np.random.default_rng(seed + 1)
    params.biases = [rng.uniform(-1, 1, b.shape) for b in params.biases]
    return cfg, params


@pytest.mark.parametrize("activation", ["sine", "tanh"])
def test_jets_match_finite_differences(activation):
    cfg, params = _random_net(activation=activation)
    spec = JetSpec(2, (0, 1), ((0, 0), (1, 1)))
    x = np.array([[0.3, -0.2]])
    J = nw.embed_jet(params, cfg, x, spec)
    h = 1e-4
    for i in range(2):
        e = np.zeros((1, 2))
        e[0, i] = h
        fp, f0, fm = (nw.embed(params, cfg, x + e), nw.embed(params, cfg, x), nw.embed(params, cfg, x - e))
        d1 = (fp - fm) / (2 * h)
        d2 = (fp - 2 * f0 + fm) / h ** 2
        assert np.allclose(J.d(i), d1, rtol=1e-6, atol=1e-7)
        assert np.allclose(J.dd(i), d2, rtol=1e-4, atol=1e-5)


def test_value_slot_is_bit_identical_to_forward():
    cfg, params = _random_net()
    pts = np.random.default_rng(0).uniform(-1, 2, (7, 2))
    J = nw.embed_jet(params, cfg, pts, JetSpec(2, (0, 1), ((0, 0),)))
    assert np.array_equal(J.value, nw.embed(params, cfg, pts))


def test_jets_are_linear_in_the_head():
    cfg, params = _random_net()
    pts = np.random.default_rng(1).uniform(-1, 2, (5, 2))
    J = nw.embed_jet(params, cfg, pts, JetSpec(2, (0, 1), ((0, 0), (1, 1))))
    a, b = np.random.default_rng(2).standard_normal((2, cfg.embedding_width))
    for c in J.comps:
        assert np.allclose(c @ (2 * a - 3 * b), 2 * (c @ a) - 3 * (c @ b), rtol=0, atol=1e-12)


def test_unsupported_activation():
    stack = Stack([DenseLayer(np.ones((1, 1)), np.zeros(1), "relu")], np.zeros(1), np.ones(1))
    with pytest.raises(UnsupportedOperator):
        ad.propagate_jets(stack, [0.1], JetSpec(1, (0,)))


def test_jetspec_validation():
    with pytest.raises(ValueError):
        JetSpec(1, (1,))
    with pytest.raises(ValueError):
        JetSpec(2, (0, 1), ((0, 1),))
    with pytest.raises(ValueError):
        JetSpec(2, (0,), ((1, 1),))
    with pytest.raises(DimensionMismatch):
        ad.propagate_jets(Stack([], np.zeros(2), np.ones(2)), [0.0], JetSpec(2))


# -- ridge adjoint ----------------------------------------------------------

def test_adjoint_scalar_example():
    X = np.array([[1.0], [1.0]])
    y = np.array([1.0, 3.0])
    w = linalg.ridge_solve(X, y, 2.0)
    assert w[0] == pytest.approx(1.0)
    X_bar, y_bar, lam_bar = ad.adjoint_ridge_solve(X, y, 2.0, w, np.array([1.0]))
    assert np.allclose(y_bar, [0.25, 0.25])
    assert lam_bar == pytest.approx(-0.25)
    # w = X^T y / (lam + X^T X): dw/dX_i = (y_i - 2 X_i w) / (lam + X^T X)
    assert np.allclose(X_bar[:, 0], (y - 2 * X[:, 0] * w[0]) / 4.0)


def test_adjoint_zero_cotangent():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((6, 3)), rng.standard_normal(6)
    w = linalg.ridge_solve(X, y, 0.1)
    for c in ad.adjoint_ridge_solve(X, y, 0.1, w, np.zeros(3)):
        assert np.all(np.asarray(c) == 0)


def test_adjoint_directional_derivative():
    rng = np.random.default_rng(5)
    X, y, lam = rng.standard_normal((12, 4)), rng.standard_normal(12), 0.3
    w = linalg.ridge_solve(X, y, lam)
    w_bar = rng.standard_normal(4)
    X_bar, y_bar, lam_bar = ad.adjoint_ridge_solve(X, y, lam, w, w_bar)
    for _ in range(5):
        dX, dy, dl = rng.standard_normal((12, 4)), rng.standard_normal(12), rng.standard_normal()
        h = 1e-6
        dw = (linalg.ridge_solve(X + h * dX, y + h * dy, lam + h * dl)
              - linalg.ridge_solve(X - h * dX, y - h * dy, lam - h * dl)) / (2 * h)
        lhs = w_bar @ dw
        rhs = np.sum(X_bar * dX) + y_bar @ dy + lam_bar * dl
        assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))


def test_adjoint_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ad.adjoint_ridge_solve(np.ones((3, 2)), np.ones(3), 1.0, np.ones(2), np.ones(3))


def test_lambda_gradient_matches_analytic_one_feature():
    X = np.array([[1.0], [2.0]])
    y = np.array([1.0, -1.0])
    a, b = float(X[:, 0] @ X[:, 0]), float(X[:, 0] @ y)
    rep = ad.grad_params(lambda P: ad.vsum(ad.ridge_solve(X, y, P["lam"]) ** 2), {"lam": np.array(0.7)})
    # loss = (b / (lam + a))^2
    assert float(rep.grads["lam"]) == pytest.approx(-2 * b ** 2 / (0.7 + a) ** 3, rel=1e-12)


# -- full loss programs -----------------------------------------------------

def _fd_check(program, params, h=1e-5):
    rep = ad.grad_params(program, params)
    for k, v in params.items():
        num = central_diff(lambda x: float(ad.value_of(program({**params, k: x}))), v, h)
        ok, worst = grads_close(rep.grads[k], num)
        assert ok, (k, worst)
    return rep


def test_pil_loss_gradient_poisson_tiny_net():
    problem = tiny_poisson(21)
    cfg = nw.NetConfig("concat_skip", 1, 2, 8, 2.0, "sine", 0, (-10.0,), (10.0,))
    params = nw.init(cfg)
    params.biases = [np.random.default_rng(9).uniform(-0.5, 0.5, 8) for _ in range(2)]
    rng = np.random.default_rng(2)
    insts = [problem.make_instance(problem.sample_theta(rng), i) for i in range(2)]
    P = {**params.trunk_dict(), "rho_pde": np.array(softplus_inv(1.0)),
         "rho_pi": np.array(softplus_inv(1e-3))}
    rep = _fd_check(lambda Q: pil_loss(Q, cfg, problem, insts), P)
    assert np.all(np.isfinite(rep.flat)) and np.any(rep.flat != 0)


def test_pil_loss_gradient_through_four_picard_iterations():
    problem = tiny_burgers(5, 5)
    cfg = nw.NetConfig("concat_skip", 2, 2, 4, 1.0, "sine", 1, problem.spec.lower, problem.spec.upper)
    params = nw.init(cfg)
    params.biases = [np.random.default_rng(3).uniform(-0.5, 0.5, 4) for _ in range(2)]
    pts = problem.grid_points()
    ref = (-np.sin(np.pi * pts[:, 0]) * np.exp(-pts[:, 1])).reshape(problem.spec.grid_shape)
    inst = PdeInstance(problem, np.array([0.05]), 0, ref)
    P = {**params.trunk_dict(), "rho_pde": np.array(softplus_inv(0.5)),
         "rho_pi": np.array(softplus_inv(1e-2))}
    _fd_check(lambda Q: pil_loss(Q, cfg, problem, [inst], iters=4), P)


def test_single_picard_step_equals_linear_solve_gradient():
    """One Picard sweep of a nonlinear-flagged problem whose operator ignores
    the frozen field is exactly the linear solve."""
    base = tiny_poisson(15)

    class FlaggedPoisson(type(base)):
        spec = base.spec.__class__(**{**base.spec.__dict__, "linear": False})

        def initial_guess(self, theta, points, policy):
            return np.zeros(len(points))

    flagged = FlaggedPoisson()
    cfg = nw.NetConfig("concat_skip", 1, 2, 5, 1.0, "sine", 0, (-10.0,), (10.0,))
    trunk_params = nw.init(cfg).trunk_dict()
    theta = np.array([0.4, 1.1])
    P = {**trunk_params, "rho_pde": np.array(0.2), "rho_pi": np.array(softplus_inv(1e-3))}
    g_lin = ad.grad_params(lambda Q: pil_loss(Q, cfg, base, [base.make_instance(theta)]), P)
    g_pic = ad.grad_params(lambda Q: pil_loss(Q, cfg, flagged, [flagged.make_instance(theta)], iters=1), P)
    assert np.allclose(g_pic.flat, g_lin.flat, rtol=1e-10, atol=1e-14)


def test_data_mse_gradient_matches_fd():
    cfg, params = _random_net(nodes=4)
    pts = np.random.default_rng(0).uniform(-1, 2, (9, 2))
    target = np.sin(pts.sum(axis=1))
    head = np.random.default_rng(1).standard_normal(cfg.embedding_width)

    def program(Q):
        emb = ad.forward_jets(nw.stack([Q["W0"], Q["W1"]], [Q["b0"], Q["b1"]], cfg), pts, JetSpec(2)).value
        r = emb @ Q["head"] - target
        return ad.mean(r * r)

    P = {**params.trunk_dict(), "head": head}
    rep = ad.grad_params(program, P)
    for k, v in P.items():
        num = central_diff(lambda x: float(ad.value_of(program({**P, k: x}))), v, 1e-6)
        assert grads_close(rep.grads[k], num, rel=1e-6)[0], k


def test_features_cached_rows_share_identity():
    problem = tiny_poisson(11)
    cfg = nw.NetConfig("concat_skip", 1, 2, 3, 1.0, "sine", 0, (-10.0,), (10.0,))
    f = pinv.features(problem, nw.Trunk(nw.init(cfg), cfg))
    assert f.jets.rows(f.colloc.pde) is f.jets.rows(f.colloc.pde)
    assert f.jets.rows(f.colloc.pde) is not f.jets.rows(f.colloc.pde.copy())
