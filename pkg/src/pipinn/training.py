"""Model-building procedures and zero-shot evaluation.

``mlp``
    sine MLP on ``(x, t, theta)`` fitted to the seen solution grids; its last
    hidden layer doubles as the embedding for MLP+Pi^2 adaptation.
``hydra``
    concat-skip sine trunk with one head per seen instance, fitted by data MSE.
``pil``
    concat-skip trunk trained through the closed-form head solve: each step
    adapts a minibatch of seen instances with the current trunk and learned
    ``lambda_pde``/``lambda_pi`` and backpropagates the data error of the
    adapted predictions.
``single_pinn``
    baseline that gradient-trains trunk and head on the physics residual of
    one instance.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from . import network as nw
from . import pinv
from .autodiff import JetBatch, JetSpec
from .errors import NumericalError
from .problems.base import Dataset, PdeInstance, Problem, rel_l2

KINDS = ("mlp", "hydra", "pil", "single_pinn")
METHODS = ("mlp", "mlp_pi2", "hydra_pi2", "pil", "single_pinn")

LAMBDA_PDE_GRID = tuple(10.0 ** k for k in range(-3, 4))
LAMBDA_PI_GRID = (0.0,) + tuple(10.0 ** k for k in range(-10, -1))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 1000
    batch_instances: int = 4
    batch_points: int = 1024
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        for name in ("steps", "batch_instances", "batch_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment coefficients must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def softplus_inv(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


@dataclass
class LearnableWeights:
    """Raw scalars whose softplus gives ``lambda_pde`` and ``lambda_pi``."""

    rho_pde: float = softplus_inv(1.0)
    rho_pi: float = softplus_inv(1e-6)

    @property
    def lambda_pde(self) -> float:
        return softplus(self.rho_pde)

    @property
    def lambda_pi(self) -> float:
        return softplus(self.rho_pi)


@dataclass
class TrainedModel:
    kind: str
    problem: str
    config: nw.NetConfig
    params: nw.NetParams
    lambdas: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    seen_ids: list = field(default_factory=list)
    train_seconds: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "pil" and not {"lambda_pde", "lambda_pi"} <= set(self.lambdas):
            raise ValueError("pil models carry learned lambda_pde and lambda_pi")
        if self.kind == "hydra" and len(self.params.heads) != len(self.seen_ids):
            raise ValueError("hydra models need one head per seen instance")

    def trunk(self, theta=None) -> nw.Trunk:
        extra = theta if self.config.variant == "plain_mlp" else None
        return nw.Trunk(self.params, self.config, extra_inputs=extra)

    @property
    def final_loss(self) -> float:
        return self.trace[-1]["loss"] if self.trace else float("nan")

    def adapt_config(self, problem: Problem, **kw) -> pinv.AdaptConfig:
        """Default adaptation settings (the learned weights for PiL models)."""
        if self.kind == "pil":
            kw.setdefault("lambda_pde", self.lambdas["lambda_pde"])
            kw.setdefault("lambda_pi", self.lambdas["lambda_pi"])
        return pinv.AdaptConfig.for_problem(problem, **kw)


def save_trained(path, model: TrainedModel) -> None:
    meta = {"kind": model.kind, "problem": model.problem, "lambdas": model.lambdas,
            "seen_ids": [int(i) for i in model.seen_ids]}
    nw.save_model(path, model.config, model.params, meta)


def load_trained(path) -> TrainedModel:
    config, params, meta, _ = nw.load_model(path)
    return TrainedModel(meta["kind"], meta["problem"], config, params,
                        lambdas=dict(meta.get("lambdas", {})), seen_ids=list(meta.get("seen_ids", [])))


def write_trace(path, trace: list) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "loss", "lambda_pde", "lambda_pi"])
        for row in trace:
            wr.writerow([row["step"], repr(row["loss"]),
                         repr(row.get("lambda_pde", "")) if "lambda_pde" in row else "",
                         repr(row.get("lambda_pi", "")) if "lambda_pi" in row else ""])


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

class Adam:
    """Adaptive-moment gradient descent with a constant learning rate."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            params[k] = params[k] - c.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def _optimize(program, params: dict, cfg: TrainConfig, on_step=None) -> list:
    """Run ``cfg.steps`` Adam steps on ``program(leaves, step)``, updating
    ``params`` in place.

    Returns the trace of pre-update losses; ``on_step(step, params)`` may add
    extra columns to each trace row.
    """
    opt = Adam(params, cfg)
    trace = []
    for step in range(cfg.steps):
        rep = ad.grad_params(lambda leaves: program(leaves, step), params)
        row = {"step": step, "loss": rep.loss}
        if on_step is not None:
            row.update(on_step(step, params))
        trace.append(row)
        opt.step(params, rep.grads)
    return trace


def _split_params(params: dict, n_layers: int):
    return ([params[f"W{i}"] for i in range(n_layers)], [params[f"b{i}"] for i in range(n_layers)])


# --------------------------------------------------------------------------
# configurations
# --------------------------------------------------------------------------

def trunk_config(problem: Problem, hidden_layers: int = 4, nodes: int = 50,
                 freq_factor: float | None = None, init_seed: int = 0) -> nw.NetConfig:
    sp = problem.spec
    return nw.NetConfig("concat_skip", sp.input_dim, hidden_layers, nodes,
                        sp.freq_factor if freq_factor is None else freq_factor, "sine", init_seed,
                        sp.lower, sp.upper)


def mlp_config(problem: Problem, hidden_layers: int = 4, nodes: int = 50,
               init_seed: int = 0, activation: str = "sine") -> nw.NetConfig:
    """Plain MLP over ``(inputs, theta)``; theta is normalized by its sampling box."""
    sp = problem.spec
    lo = tuple(sp.lower) + tuple(sp.task_lower)
    hi = tuple(sp.upper) + tuple(sp.task_upper)
    hi = tuple(h if h > l else l + 1.0 for l, h in zip(lo, hi))
    return nw.NetConfig("plain_mlp", sp.input_dim + sp.task_dim, hidden_layers, nodes, 1.0,
                        activation, init_seed, lo, hi)


# --------------------------------------------------------------------------
# trainers
# --------------------------------------------------------------------------

def _seen(dataset: Dataset, seen_ids) -> list:
    seen = dataset.subset(seen_ids)
    if not seen:
        raise ValueError("at least one seen instance is required")
    if any(inst.reference is None for inst in seen):
        raise ValueError("seen instances need reference grids")
    return seen


def _resume_from(start, kind: str, net):
    if start.kind != kind:
        raise ValueError(f"cannot resume {kind} training from a {start.kind} model")
    if net is not None and net != start.config:
        raise ValueError("network config differs from the model being resumed")
    return start.config


def train_mlp(dataset: Dataset, seen_ids, cfg: TrainConfig,
              net: nw.NetConfig | None = None, start: TrainedModel | None = None) -> TrainedModel:
    """Minibatch MSE fit of ``u(x, t, theta)`` over all seen samples.

    ``start`` continues from an earlier model's weights (fresh optimizer state).
    """
    problem = dataset.problem
    seen = _seen(dataset, seen_ids)
    if start is not None:
        net = _resume_from(start, "mlp", net)
    net = net or mlp_config(problem, init_seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    init = nw.init(net, rng)
    head = nw.init_heads(net, 1, rng)[0]
    if start is not None:
        init, head = start.params.copy(), np.array(start.params.heads[0])
    pts = problem.grid_points()
    inputs = np.vstack([np.hstack([pts, np.broadcast_to(i.theta, (len(pts), len(i.theta)))])
                        for i in seen])
    targets = np.concatenate([i.reference.ravel() for i in seen])
    n_layers = net.hidden_layers
    params = {**init.trunk_dict(), "head": head}
    batch = min(cfg.batch_points, len(targets))
    spec0 = JetSpec(net.input_dim)
    order = np.arange(len(targets))

    def program(P, step):
        idx = order if batch == len(targets) else np.sort(rng.choice(len(targets), batch, replace=False))
        emb = ad.forward_jets(nw.stack(*_split_params(P, n_layers), net), inputs[idx], spec0).value
        r = emb @ P["head"] - targets[idx]
        return ad.mean(r * r)

    t0 = time.perf_counter()
    trace = _optimize(program, params, cfg)
    elapsed = time.perf_counter() - t0
    out = nw.NetParams.from_trunk_dict(params, heads=[params["head"]])
    return TrainedModel("mlp", problem.spec.name, net, out, trace=trace,
                        seen_ids=list(seen_ids), train_seconds=elapsed)


def hydra_loss(P: dict, n_layers: int, net: nw.NetConfig, points, targets):
    """Mean over instances of per-instance MSE; ``targets`` is ``(points, K)``."""
    emb = ad.forward_jets(nw.stack(*_split_params(P, n_layers), net), points,
                          JetSpec(net.input_dim)).value
    K = targets.shape[1]
    H = ad.stack([P[f"head{k}"] for k in range(K)], axis=1)
    r = emb @ H - targets
    return ad.mean(r * r)


def train_hydra(dataset: Dataset, seen_ids, cfg: TrainConfig,
                net: nw.NetConfig | None = None, start: TrainedModel | None = None) -> TrainedModel:
    """Shared concat-skip trunk with one head per seen instance (full-grid batches)."""
    problem = dataset.problem
    seen = _seen(dataset, seen_ids)
    if start is not None:
        net = _resume_from(start, "hydra", net)
        if len(start.params.heads) != len(seen):
            raise ValueError("resumed hydra model has a different number of heads")
    net = net or trunk_config(problem, init_seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    init = nw.init(net, rng)
    heads = nw.init_heads(net, len(seen), rng)
    if start is not None:
        init, heads = start.params.copy(), [np.array(h) for h in start.params.heads]
    pts = problem.grid_points()
    targets = np.stack([i.reference.ravel() for i in seen], axis=1)
    params = {**init.trunk_dict(), **{f"head{k}": h for k, h in enumerate(heads)}}
    n_layers = net.hidden_layers

    t0 = time.perf_counter()
    trace = _optimize(lambda P, step: hydra_loss(P, n_layers, net, pts, targets), params, cfg)
    elapsed = time.perf_counter() - t0
    out = nw.NetParams.from_trunk_dict(params, heads=[params[f"head{k}"] for k in range(len(seen))])
    return TrainedModel("hydra", problem.spec.name, net, out, trace=trace,
                        seen_ids=list(seen_ids), train_seconds=elapsed)


def pil_loss(P: dict, net: nw.NetConfig, problem: Problem, instances: list,
             colloc=None, iters: int | None = None, init: str = "ic_extension"):
    """Mean relative MSE of closed-form adapted predictions on ``instances``.

    ``P`` holds trunk weights plus raw scalars ``rho_pde`` and ``rho_pi``.
    The trunk jets are shared by all instances (same grid).
    """
    n_layers = net.hidden_layers
    colloc = colloc or problem.collocation()
    jets = ad.forward_jets(nw.stack(*_split_params(P, n_layers), net), problem.grid_points(),
                           problem.spec.jet_spec)
    feats = pinv.Features(problem, jets, colloc)
    lam_pde = ad.softplus(P["rho_pde"])
    lam_pi = ad.softplus(P["rho_pi"])
    weights = {"PDE": lam_pde, "BC": 1.0, "IC": 1.0}
    iters = iters or (1 if problem.spec.linear else problem.spec.picard_iters)
    total = 0.0
    for inst in instances:
        w = pinv.solve_head(problem, inst.theta, feats, weights, lam_pi, iters, init)
        ref = inst.reference.ravel()
        r = jets.value @ w - ref
        total = total + ad.vsum(r * r) * (1.0 / float(ref @ ref))
    return total * (1.0 / len(instances))


def train_pil(dataset: Dataset, seen_ids, cfg: TrainConfig, net: nw.NetConfig | None = None,
              start: TrainedModel | None = None, picard_init: str = "ic_extension",
              weights: LearnableWeights | None = None) -> TrainedModel:
    """Trunk and softplus weights trained through the differentiable head solve."""
    problem = dataset.problem
    seen = _seen(dataset, seen_ids)
    if start is not None:
        net = _resume_from(start, "pil", net)
    net = net or trunk_config(problem, init_seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    init = nw.init(net, rng)
    lw = weights or LearnableWeights()
    if start is not None:
        init = start.params.copy()
        lw = LearnableWeights(softplus_inv(start.lambdas["lambda_pde"]), softplus_inv(start.lambdas["lambda_pi"]))
    params = {**init.trunk_dict(), "rho_pde": np.array(lw.rho_pde), "rho_pi": np.array(lw.rho_pi)}
    colloc = problem.collocation()
    batch = min(cfg.batch_instances, len(seen))

    def program(P, step):
        pick = np.sort(rng.choice(len(seen), batch, replace=False)) if batch < len(seen) \
            else np.arange(len(seen))
        try:
            return pil_loss(P, net, problem, [seen[i] for i in pick], colloc, init=picard_init)
        except NumericalError as exc:
            raise type(exc)(f"PiL step {step}: {exc}") from exc

    def lambdas(step, P):
        return {"lambda_pde": softplus(float(P["rho_pde"])), "lambda_pi": softplus(float(P["rho_pi"]))}

    t0 = time.perf_counter()
    trace = _optimize(program, params, cfg, on_step=lambdas)
    elapsed = time.perf_counter() - t0
    out = nw.NetParams.from_trunk_dict(params)
    lam = lambdas(cfg.steps, params)
    return TrainedModel("pil", problem.spec.name, net, out, lambdas=lam, trace=trace,
                        seen_ids=list(seen_ids), train_seconds=elapsed)


def train(kind: str, dataset: Dataset, seen_ids, cfg: TrainConfig,
          net: nw.NetConfig | None = None, start: TrainedModel | None = None) -> TrainedModel:
    trainers = {"mlp": train_mlp, "hydra": train_hydra, "pil": train_pil}
    if kind not in trainers:
        raise ValueError(f"unknown trainer {kind!r}; choose from {sorted(trainers)}")
    return trainers[kind](dataset, seen_ids, cfg, net, start)


# --------------------------------------------------------------------------
# single-instance PINN baseline
# --------------------------------------------------------------------------

def _field_jets(jets: JetBatch, head) -> JetBatch:
    """Jets of the scalar field ``jets @ head`` as a one-feature batch."""
    return JetBatch([ad.reshape(c @ head, -1, 1) for c in jets.comps], jets.spec)


def physics_loss(problem: Problem, theta, jets: JetBatch, head, weights: dict, colloc=None):
    """Mean squared weighted constraint residual of the field ``jets @ head``.

    Nonlinear operators are evaluated at the field itself, so this is the
    true (not linearized) residual.  For linear problems it equals
    ``||X head - y||^2 / rows`` with the adaptation system's rows.
    """
    colloc = colloc or problem.collocation()
    uj = _field_jets(jets, head)
    u_pde = None if problem.spec.linear else ad.reshape(uj.value[colloc.pde], -1)
    blocks = problem.blocks(uj, theta, u_pde, colloc)
    total, rows = 0.0, 0
    for tag in pinv.TAGS:
        if tag not in blocks:
            continue
        Xb, yb = blocks[tag]
        r = (ad.reshape(Xb, -1) - yb) * weights[tag]
        total = total + ad.vsum(r * r)
        rows += len(yb)
    return total * (1.0 / rows)


@dataclass
class PinnResult:
    model: TrainedModel
    seconds_to_target: float | None
    steps_to_target: int | None
    final_rel_l2: float
    history: list


def train_single_pinn(instance: PdeInstance, cfg: TrainConfig, net: nw.NetConfig | None = None,
                      trunk=None, freeze_trunk: bool = False, adapt: pinv.AdaptConfig | None = None,
                      target_rel_l2: float | None = None, eval_every: int = 50,
                      max_seconds: float | None = None) -> PinnResult:
    """Gradient-train a head (and unless frozen, a trunk) on the physics loss.

    With ``target_rel_l2`` the run stops at the first evaluation reaching the
    target against ``instance.reference``; ``seconds_to_target`` counts only
    training time, not the evaluations.  ``max_seconds`` caps that training
    time.  ``trunk`` may be any object with a ``jets(points, spec)`` method
    when ``freeze_trunk`` is set.
    """
    problem = instance.problem
    adapt = adapt or pinv.AdaptConfig()
    weights = adapt.weights()
    colloc = problem.collocation()
    pts = problem.grid_points()
    spec = problem.spec.jet_spec
    rng = np.random.default_rng(cfg.seed)
    if freeze_trunk:
        if trunk is None:
            raise ValueError("freeze_trunk needs a trunk")
        fixed = trunk.jets(pts, spec)
        width = fixed.width
        net = getattr(trunk, "config", None)
        params = {"head": np.zeros(width)}
        n_layers = 0
    else:
        net = net or trunk_config(problem, init_seed=cfg.seed)
        init = nw.init(net, rng)
        params = {**init.trunk_dict(), "head": nw.init_heads(net, 1, rng)[0]}
        n_layers = net.hidden_layers
        fixed = None

    def jets_of(P):
        if fixed is not None:
            return fixed
        return ad.forward_jets(nw.stack(*_split_params(P, n_layers), net), pts, spec)

    def program(P):
        return physics_loss(problem, instance.theta, jets_of(P), P["head"], weights, colloc)

    opt = Adam(params, cfg)
    trace, history = [], []
    spent = 0.0
    hit_time, hit_step = None, None
    final = float("nan")
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        rep = ad.grad_params(program, params)
        opt.step(params, rep.grads)
        spent += time.perf_counter() - t0
        trace.append({"step": step, "loss": rep.loss})
        out_of_time = max_seconds is not None and spent >= max_seconds
        last = step == cfg.steps - 1 or out_of_time
        if instance.reference is not None and ((step + 1) % eval_every == 0 or last):
            pred = (np.asarray(ad.value_of(jets_of(params).value)) @ params["head"]).reshape(
                problem.spec.grid_shape)
            final = rel_l2(pred, instance.reference)
            history.append({"step": step + 1, "seconds": spent, "rel_l2": final})
            if target_rel_l2 is not None and final <= target_rel_l2:
                hit_time, hit_step = spent, step + 1
                break
        if out_of_time:
            break
    if n_layers:
        out = nw.NetParams.from_trunk_dict(params, heads=[params["head"]])
    else:
        out = nw.NetParams([], [], heads=[params["head"]])
    model = TrainedModel("single_pinn", problem.spec.name, net or trunk_config(problem), out,
                         trace=trace, seen_ids=[instance.instance_id], train_seconds=spent)
    return PinnResult(model, hit_time, hit_step, final, history)


# --------------------------------------------------------------------------
# adaptation, grid search, evaluation
# --------------------------------------------------------------------------

@dataclass
class EvalRow:
    instance_id: int
    rel_l2: float
    adapt_ms: float
    split: str = "unseen"


def _features_for(model_or_trunk, problem: Problem, theta, cache: dict):
    if isinstance(model_or_trunk, TrainedModel):
        trunk = model_or_trunk.trunk(theta)
    else:
        trunk = model_or_trunk
    key = None if getattr(trunk, "extra", None) is None else tuple(np.asarray(theta).tolist())
    if key not in cache:
        cache[key] = pinv.features(problem, trunk)
    return cache[key]


def grid_search(model_or_trunk, instances: list, problem: Problem | None = None,
                lambda_pde_grid=LAMBDA_PDE_GRID, lambda_pi_grid=LAMBDA_PI_GRID,
                base: pinv.AdaptConfig | None = None, return_scores: bool = False):
    """Pick ``(lambda_pde, lambda_pi)`` minimizing mean seen-instance rel-L2.

    Cells whose factorization (or Picard iteration) fails score ``inf``.
    Among equal scores the larger ``lambda_pi`` wins, then the smaller
    ``lambda_pde`` (grid order).
    """
    problem = problem or instances[0].problem
    base = base or pinv.AdaptConfig.for_problem(problem)
    cache: dict = {}
    scores = {}
    best, best_score = None, np.inf
    for lp in lambda_pde_grid:
        for li in lambda_pi_grid:
            cfg = replace(base, lambda_pde=float(lp), lambda_pi=float(li), lambda_bc=1.0, lambda_ic=1.0)
            errs = []
            for inst in instances:
                feats = _features_for(model_or_trunk, problem, inst.theta, cache)
                try:
                    head = pinv.adapt(inst.stripped(), None, cfg, feats)
                    errs.append(rel_l2(head.prediction, inst.reference))
                except NumericalError:
                    errs.append(np.inf)
            score = float(np.mean(errs))
            if not np.isfinite(score):
                score = np.inf
            scores[(float(lp), float(li))] = score
            if best is None or score < best_score or (
                    np.isfinite(score) and score == best_score and li > best.lambda_pi):
                best, best_score = cfg, score
    return (best, scores) if return_scores else best


def adapt_instance(model: TrainedModel, instance: PdeInstance, cfg: pinv.AdaptConfig):
    """Zero-shot adaptation on a stripped instance; returns ``(prediction, seconds)``.

    The timed region covers the embedding jets, assembly, solve(s) and the
    grid prediction.
    """
    inst = instance.stripped()
    t0 = time.perf_counter()
    feats = pinv.features(inst.problem, model.trunk(inst.theta))
    w = pinv.solve_head(inst.problem, inst.theta, feats, cfg.weights(), cfg.lambda_pi,
                        1 if inst.problem.spec.linear else cfg.picard_iters, cfg.picard_init)
    pred = feats.predict(w)
    return pred, time.perf_counter() - t0


def mlp_predict(model: TrainedModel, instance: PdeInstance):
    t0 = time.perf_counter()
    pred = model.trunk(instance.theta).embed(instance.problem.grid_points()) @ model.params.heads[0]
    return pred.reshape(instance.problem.spec.grid_shape), time.perf_counter() - t0


def adapt_and_eval(model: TrainedModel, instances: list, method: str,
                   cfg: pinv.AdaptConfig | None = None) -> list:
    """Score ``method`` on ``instances`` (rel-L2 against their references).

    ``mlp`` is the plain interpolation prediction; ``mlp_pi2``, ``hydra_pi2``
    and ``pil`` adapt the head in closed form on each instance with the
    reference removed.
    """
    valid = {"mlp": "mlp", "mlp_pi2": "mlp", "hydra_pi2": "hydra", "pil": "pil"}
    if method not in valid:
        raise ValueError(f"unknown evaluation method {method!r}")
    if model.kind != valid[method]:
        raise ValueError(f"method {method} needs a {valid[method]} model, got {model.kind}")
    rows = []
    for inst in instances:
        if method == "mlp":
            pred, secs = mlp_predict(model, inst)
        else:
            acfg = cfg or model.adapt_config(inst.problem)
            pred, secs = adapt_instance(model, inst, acfg)
        rows.append(EvalRow(inst.instance_id, rel_l2(pred, inst.reference), 1e3 * secs))
    return rows


def eval_seen_hydra(model: TrainedModel, dataset: Dataset) -> list:
    """Seen instances scored with their own trained heads (no adaptation)."""
    rows = []
    pts = dataset.problem.grid_points()
    emb = model.trunk().embed(pts)
    for k, iid in enumerate(model.seen_ids):
        inst = dataset.instances[iid]
        pred = (emb @ model.params.heads[k]).reshape(dataset.problem.spec.grid_shape)
        rows.append(EvalRow(inst.instance_id, rel_l2(pred, inst.reference), 0.0, "seen"))
    return rows


def mean_rel_l2(rows: list) -> float:
    return float(np.mean([r.rel_l2 for r in rows]))


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

PRESETS = {
    "poisson": {"mlp": {"steps": 3000, "batch_points": 256},
                "hydra": {"steps": 2000},
                "pil": {"steps": 300, "batch_instances": 2},
                "single_pinn": {"steps": 5000}},
    "helmholtz": {"mlp": {"steps": 3000, "batch_points": 1024},
                  "hydra": {"steps": 2000},
                  "pil": {"steps": 200, "batch_instances": 2},
                  "single_pinn": {"steps": 5000}},
    "burgers-sine": {"mlp": {"steps": 3000, "batch_points": 1024},
                     "hydra": {"steps": 1500},
                     "pil": {"steps": 200, "batch_instances": 2},
                     "single_pinn": {"steps": 20000}},
    "burgers-family": {"mlp": {"steps": 3000, "batch_points": 1024},
                       "hydra": {"steps": 1500},
                       "pil": {"steps": 200, "batch_instances": 2},
                       "single_pinn": {"steps": 20000}},
}


def preset(problem: str, kind: str, **overrides) -> TrainConfig:
    base = dict(PRESETS.get(problem, {}).get(kind, {}))
    base.update(overrides)
    return TrainConfig(**base)

