"""Command-line harness: ``pipinn {gen,train,eval,gridsearch,bench}``.

Configs are JSON objects; relative paths inside them resolve against the
config file's directory.  Every command writes the resolved config next to
its outputs.  Deterministic outputs (datasets, models, traces,
``results.csv``) never contain wall-clock data; timings go to separate
``timings.csv`` / ``bench.json`` files.

Exit codes: 0 success, 2 usage or config error, 3 numerical failure, 4 IO error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import pinv
from . import training as tr
from .errors import ConfigError, NumericalError
from .problems import PROBLEMS, load_dataset, make_dataset, save_dataset, write_grid

CONFIG_VERSION = 1
OUT_ENV = "PIPINN_OUT"
DEFAULT_OUT = "pipinn-out"
RESULT_COLUMNS = ["problem", "method", "K", "seed", "instance_id", "split", "rel_l2"]
TIMING_COLUMNS = ["method", "K", "seed", "instance_id", "adapt_ms"]
METHODS_BY_KIND = {"mlp": ("mlp", "mlp_pi2"), "hydra": ("hydra", "hydra_pi2"), "pil": ("pil",)}
NET_FIELDS = ("hidden_layers", "nodes", "freq_factor", "activation")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# --------------------------------------------------------------------------
# config validation
# --------------------------------------------------------------------------

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _int_list(v):
    return _is_int(v) or (isinstance(v, list) and len(v) > 0 and all(_is_int(x) for x in v))


def _str_list(v):
    return isinstance(v, str) or (isinstance(v, list) and len(v) > 0 and all(isinstance(x, str) for x in v))


def _num_list(v):
    return isinstance(v, list) and len(v) > 0 and all(_is_num(x) for x in v)


_TRAIN_KEYS = tuple(f.name for f in fields(tr.TrainConfig))
_ADAPT_KEYS = tuple(f.name for f in fields(pinv.AdaptConfig))

# key -> (predicate, description, required)
SCHEMAS = {
    "gen": {
        "problem": (lambda v: v in PROBLEMS, f"one of {sorted(PROBLEMS)}", True),
        "count": (_is_int, "an integer", True),
        "seed": (_is_int, "an integer", False),
        "options": (lambda v: isinstance(v, dict), "an object", False),
    },
    "train": {
        "dataset": (lambda v: isinstance(v, str), "a path", True),
        "kind": (_str_list, "a kind or list of kinds", True),
        "K": (_int_list, "an integer or list of integers", True),
        "seed": (_int_list, "an integer or list of integers", False),
        "split_seed": (_is_int, "an integer", False),
        "net": (lambda v: isinstance(v, dict), "an object", False),
        "train": (lambda v: isinstance(v, dict), "an object", False),
        "resume": (lambda v: isinstance(v, str), "a model path", False),
    },
    "eval": {
        "dataset": (lambda v: isinstance(v, str), "a path", True),
        "models": (lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v) and v,
                   "a non-empty list of model paths", True),
        "methods": (_str_list, "a method or list of methods", False),
        "split": (lambda v: v in ("unseen", "seen", "all"), "one of unseen, seen, all", False),
        "adapt": (lambda v: isinstance(v, dict), "an object", False),
        "grid_search": (lambda v: isinstance(v, bool), "a boolean", False),
        "lambda_pde_grid": (_num_list, "a list of numbers", False),
        "lambda_pi_grid": (_num_list, "a list of numbers", False),
    },
    "gridsearch": {
        "dataset": (lambda v: isinstance(v, str), "a path", True),
        "model": (lambda v: isinstance(v, str), "a model path", True),
        "adapt": (lambda v: isinstance(v, dict), "an object", False),
        "lambda_pde_grid": (_num_list, "a list of numbers", False),
        "lambda_pi_grid": (_num_list, "a list of numbers", False),
    },
    "bench": {
        "dataset": (lambda v: isinstance(v, str), "a path", True),
        "model": (lambda v: isinstance(v, str), "a model path", True),
        "instance": (_is_int, "an instance id", False),
        "repeats": (lambda v: _is_int(v) and v >= 1, "a positive integer", False),
        "adapt": (lambda v: isinstance(v, dict), "an object", False),
        "grid_search": (lambda v: isinstance(v, bool), "a boolean", False),
        "mlp_model": (lambda v: isinstance(v, str), "a model path", False),
        "target_rel_l2": (lambda v: _is_num(v) and v > 0, "a positive number", False),
        "single_pinn": (lambda v: isinstance(v, dict), "an object", False),
        "seed": (_is_int, "an integer", False),
    },
}

SUBSECTIONS = {
    "train": _TRAIN_KEYS,
    "adapt": _ADAPT_KEYS,
    "net": NET_FIELDS,
    "single_pinn": ("train", "net", "eval_every", "max_seconds"),
    "single_pinn.train": _TRAIN_KEYS,
    "single_pinn.net": NET_FIELDS,
}


def validate(verb: str, cfg) -> list:
    """All problems with ``cfg`` as ``"field.path: message"`` strings."""
    if not isinstance(cfg, dict):
        return ["<root>: config must be a JSON object"]
    errors = []
    version = cfg.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        errors.append(f"version: unsupported config version {version!r}")
    schema = SCHEMAS[verb]
    for key in sorted(set(cfg) - set(schema) - {"version"}):
        errors.append(f"{key}: unknown field")
    for key, (ok, what, required) in schema.items():
        if key not in cfg:
            if required:
                errors.append(f"{key}: required field missing")
            continue
        if not ok(cfg[key]):
            errors.append(f"{key}: must be {what}, got {cfg[key]!r}")
    _check_sections(cfg, "", errors)
    if verb == "train" and "kind" in cfg and _str_list(cfg["kind"]):
        for i, k in enumerate(_as_list(cfg["kind"])):
            if k not in METHODS_BY_KIND:
                errors.append(f"kind[{i}]: unknown model kind {k!r}; choose from {sorted(METHODS_BY_KIND)}")
    if verb == "eval" and "methods" in cfg and _str_list(cfg["methods"]):
        known = {m for ms in METHODS_BY_KIND.values() for m in ms}
        for i, m in enumerate(_as_list(cfg["methods"])):
            if m not in known:
                errors.append(f"methods[{i}]: unknown method {m!r}; choose from {sorted(known)}")
    return errors


def _check_sections(cfg: dict, prefix: str, errors: list):
    for key, value in cfg.items():
        path = f"{prefix}{key}"
        if path in SUBSECTIONS and isinstance(value, dict):
            for sub in sorted(set(value) - set(SUBSECTIONS[path])):
                errors.append(f"{path}.{sub}: unknown field")
            _check_sections(value, path + ".", errors)


def _as_list(v):
    return v if isinstance(v, list) else [v]


def _build(cls, section: str, values: dict, **defaults):
    try:
        return cls(**{**defaults, **values})
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        head, _, rest = msg.partition(" ")
        if head in values or head in defaults:
            raise ConfigError(f"{section}.{head}: {rest}") from None
        raise ConfigError(f"{section}: {msg}") from None


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return json.loads(text), path.resolve().parent
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _write_config(out: Path, verb: str, cfg: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{verb}_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen(cfg: dict, out: Path, base: Path) -> dict:
    count = cfg["count"]
    if count < 2:
        raise ConfigError(f"count: need at least 2 instances, got {count}")
    try:
        ds = make_dataset(cfg["problem"], count, cfg.get("seed", 0), **cfg.get("options", {}))
    except TypeError as exc:
        raise ConfigError(f"options: {exc}") from None
    save_dataset(ds, out)
    _write_config(out, "gen", cfg)
    print(f"wrote {len(ds)} {ds.name} instances to {out}")
    return {"count": len(ds)}


def _net_config(problem, kind: str, net: dict, seed: int):
    if kind == "mlp":
        kw = {k: v for k, v in net.items() if k in ("hidden_layers", "nodes", "activation")}
        return _build(lambda **k: tr.mlp_config(problem, init_seed=seed, **k), "net", kw)
    kw = {k: v for k, v in net.items() if k in ("hidden_layers", "nodes", "freq_factor")}
    return _build(lambda **k: tr.trunk_config(problem, init_seed=seed, **k), "net", kw)


def model_name(kind: str, K: int, seed: int) -> str:
    return f"{kind}-K{K}-seed{seed}"


def cmd_train(cfg: dict, out: Path, base: Path) -> dict:
    ds = load_dataset(_resolve(base, cfg["dataset"]))
    kinds, Ks, seeds = _as_list(cfg["kind"]), _as_list(cfg["K"]), _as_list(cfg.get("seed", 0))
    for K in Ks:
        if not 1 <= K < len(ds):
            raise ConfigError(f"K: {K} must lie in [1, {len(ds) - 1}] for a dataset of {len(ds)}")
    start = tr.load_trained(_resolve(base, cfg["resume"])) if "resume" in cfg else None
    if start is not None and (len(kinds) > 1 or len(Ks) > 1 or len(seeds) > 1):
        raise ConfigError("resume: resuming needs a single kind, K and seed")
    split_seed = cfg.get("split_seed", 0)
    _write_config(out, "train", cfg)
    (out / "models").mkdir(exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    summary, timings = [], []
    for kind in kinds:
        for K in Ks:
            seen, _ = ds.split(K, split_seed)
            for seed in seeds:
                tcfg = _build(tr.TrainConfig, "train", {**cfg.get("train", {}), "seed": seed},
                              **asdict(tr.preset(ds.name, kind)))
                net = None if start is not None and not cfg.get("net") else \
                    _net_config(ds.problem, kind, cfg.get("net", {}), seed)
                model = tr.train(kind, ds, seen, tcfg, net, start)
                name = model_name(kind, K, seed)
                tr.save_trained(out / "models" / f"{name}.bin", model)
                tr.write_trace(out / "traces" / f"{name}.csv", model.trace)
                summary.append([kind, K, seed, _fmt(model.final_loss)])
                timings.append([kind, K, seed, f"{model.train_seconds:.3f}"])
                print(f"{name}: final training loss {model.final_loss:.6e}")
    _write_csv(out / "train_summary.csv", ["kind", "K", "seed", "final_loss"], summary)
    _write_csv(out / "timings.csv", ["kind", "K", "seed", "train_s"], timings)
    return {"models": len(summary)}


def _adapt_cfg(problem, model, cfg: dict):
    return _build(lambda **kw: model.adapt_config(problem, **kw), "adapt", cfg.get("adapt", {}))


def _grids(cfg: dict) -> dict:
    out = {}
    if "lambda_pde_grid" in cfg:
        out["lambda_pde_grid"] = [float(v) for v in cfg["lambda_pde_grid"]]
    if "lambda_pi_grid" in cfg:
        out["lambda_pi_grid"] = [float(v) for v in cfg["lambda_pi_grid"]]
    return out


def cmd_eval(cfg: dict, out: Path, base: Path, emit_grids: bool = False) -> dict:
    ds = load_dataset(_resolve(base, cfg["dataset"]))
    problem = ds.problem
    split = cfg.get("split", "unseen")
    wanted = set(_as_list(cfg["methods"])) if "methods" in cfg else None
    _write_config(out, "eval", cfg)
    if emit_grids:
        (out / "grids").mkdir(exist_ok=True)
    results, timings, index = [], [], []
    for mpath in cfg["models"]:
        model = tr.load_trained(_resolve(base, mpath))
        if model.problem != ds.name:
            raise ConfigError(f"models: {mpath} was trained on {model.problem}, dataset is {ds.name}")
        K = len(model.seen_ids)
        seed = model.config.init_seed
        seen_ids = sorted(model.seen_ids)
        unseen_ids = [i for i in range(len(ds)) if i not in set(seen_ids)]
        ids = {"unseen": unseen_ids, "seen": seen_ids, "all": list(range(len(ds)))}[split]
        for method in METHODS_BY_KIND[model.kind]:
            if wanted is not None and method not in wanted:
                continue
            if method == "hydra":
                rows = [r for r in tr.eval_seen_hydra(model, ds) if split != "unseen"]
                preds = {}
                emb = model.trunk().embed(problem.grid_points())
                for k, iid in enumerate(model.seen_ids):
                    preds[iid] = (emb @ model.params.heads[k]).reshape(problem.spec.grid_shape)
            else:
                acfg = None
                if method != "mlp":
                    acfg = _adapt_cfg(problem, model, cfg)
                    if cfg.get("grid_search", False):
                        acfg = tr.grid_search(model, ds.subset(seen_ids), problem, base=acfg, **_grids(cfg))
                rows, preds = [], {}
                for iid in ids:
                    inst = ds.instances[iid]
                    if method == "mlp":
                        pred, secs = tr.mlp_predict(model, inst)
                    else:
                        pred, secs = tr.adapt_instance(model, inst, acfg)
                    preds[iid] = pred
                    split_tag = "seen" if iid in seen_ids else "unseen"
                    rows.append(tr.EvalRow(iid, tr.rel_l2(pred, inst.reference), 1e3 * secs, split_tag))
            for r in rows:
                results.append([ds.name, method, K, seed, r.instance_id, r.split, _fmt(r.rel_l2)])
                timings.append([method, K, seed, r.instance_id, f"{r.adapt_ms:.3f}"])
                if emit_grids:
                    rel = f"grids/{method}-K{K}-seed{seed}-{r.instance_id:06d}.f64"
                    write_grid(out / rel, preds[r.instance_id])
                    index.append({"method": method, "K": K, "seed": seed, "id": r.instance_id, "file": rel})
    _write_csv(out / "results.csv", RESULT_COLUMNS, results)
    _write_csv(out / "timings.csv", TIMING_COLUMNS, timings)
    if emit_grids:
        (out / "grids" / "manifest.json").write_text(json.dumps(
            {"grid_shape": list(problem.spec.grid_shape), "dtype": "<f8", "order": "C",
             "grids": index}, indent=1, sort_keys=True) + "\n")
    _print_summary(results)
    return {"rows": len(results)}


def _print_summary(results):
    cells = {}
    for prob, method, K, seed, _, split, err in results:
        cells.setdefault((method, K, split), []).append(float(err))
    for (method, K, split), errs in sorted(cells.items()):
        print(f"{method:10s} K={K:<3d} {split:6s} n={len(errs):<4d} mean rel-L2 {np.mean(errs):.4e}")


def cmd_gridsearch(cfg: dict, out: Path, base: Path) -> dict:
    ds = load_dataset(_resolve(base, cfg["dataset"]))
    model = tr.load_trained(_resolve(base, cfg["model"]))
    base_cfg = _adapt_cfg(ds.problem, model, cfg)
    best, scores = tr.grid_search(model, ds.subset(sorted(model.seen_ids)), ds.problem, base=base_cfg,
                                  return_scores=True, **_grids(cfg))
    _write_config(out, "gridsearch", cfg)
    _write_csv(out / "gridsearch_scores.csv", ["lambda_pde", "lambda_pi", "mean_rel_l2"],
               [[_fmt(a), _fmt(b), _fmt(s)] for (a, b), s in scores.items()])
    result = {"lambda_pde": best.lambda_pde, "lambda_pi": best.lambda_pi,
              "lambda_bc": best.lambda_bc, "lambda_ic": best.lambda_ic,
              "mean_rel_l2": scores[(best.lambda_pde, best.lambda_pi)]}
    (out / "gridsearch.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    print(f"best lambda_pde={best.lambda_pde:g} lambda_pi={best.lambda_pi:g} "
          f"mean seen rel-L2 {result['mean_rel_l2']:.4e}")
    return result


def cmd_bench(cfg: dict, out: Path, base: Path) -> dict:
    ds = load_dataset(_resolve(base, cfg["dataset"]))
    problem = ds.problem
    model = tr.load_trained(_resolve(base, cfg["model"]))
    if model.kind not in ("hydra", "pil"):
        raise ConfigError(f"model: bench adapts a hydra or pil model, got {model.kind}")
    unseen = [i for i in range(len(ds)) if i not in set(model.seen_ids)]
    iid = cfg.get("instance", unseen[0] if unseen else 0)
    if not 0 <= iid < len(ds):
        raise ConfigError(f"instance: {iid} out of range for a dataset of {len(ds)}")
    inst = ds.instances[iid]
    acfg = _adapt_cfg(problem, model, cfg)
    if cfg.get("grid_search", False):
        acfg = tr.grid_search(model, ds.subset(sorted(model.seen_ids)), problem, base=acfg)
    repeats = cfg.get("repeats", 5)
    times, adapted_err = [], None
    for _ in range(repeats):
        pred, secs = tr.adapt_instance(model, inst, acfg)
        times.append(secs)
        adapted_err = tr.rel_l2(pred, inst.reference)
    adapt_s = float(np.median(times))

    target = cfg.get("target_rel_l2")
    mlp_err = None
    if "mlp_model" in cfg:
        mlp = tr.load_trained(_resolve(base, cfg["mlp_model"]))
        mlp_err = tr.rel_l2(tr.mlp_predict(mlp, inst)[0], inst.reference)
        target = mlp_err if target is None else target
    sp = cfg.get("single_pinn", {})
    seed = cfg.get("seed", 0)
    pcfg = _build(tr.TrainConfig, "single_pinn.train", {**sp.get("train", {}), "seed": seed},
                  **asdict(tr.preset(ds.name, "single_pinn")))
    net = _net_config(problem, "hydra", sp.get("net", {}), seed)
    pinn = tr.train_single_pinn(inst, pcfg, net, adapt=acfg, target_rel_l2=target,
                                eval_every=sp.get("eval_every", 50), max_seconds=sp.get("max_seconds"))
    pinn_s = pinn.seconds_to_target if pinn.seconds_to_target is not None else pinn.model.train_seconds
    report = {
        "problem": ds.name, "instance_id": iid, "grid_points": int(np.prod(problem.spec.grid_shape)),
        "adapt_ms": [1e3 * t for t in times], "adapt_ms_median": 1e3 * adapt_s,
        "adapt_rel_l2": adapted_err, "mlp_rel_l2": mlp_err, "target_rel_l2": target,
        "single_pinn_seconds": pinn_s, "single_pinn_steps": pinn.steps_to_target,
        "single_pinn_reached_target": pinn.seconds_to_target is not None,
        "single_pinn_final_rel_l2": pinn.final_rel_l2,
        "speedup": pinn_s / adapt_s,
        # a run that stops before the target only bounds the ratio from below
        "speedup_is_lower_bound": pinn.seconds_to_target is None,
        "lambda_pde": acfg.lambda_pde, "lambda_pi": acfg.lambda_pi,
    }
    _write_config(out, "bench", cfg)
    (out / "bench.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"adaptation median {report['adapt_ms_median']:.1f} ms over {repeats} runs "
          f"(rel-L2 {adapted_err:.4e})")
    status = "reached" if report["single_pinn_reached_target"] else "did not reach"
    print(f"single PINN {status} target {target} in {pinn_s:.2f} s; speedup {report['speedup']:.1f}x")
    return report


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pipinn", description="Pseudoinverse-adapted PINN experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads (1 gives the reference bit-exact output)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    sub = ap.add_subparsers(dest="verb", required=True)
    g = sub.add_parser("gen", parents=[common], help="generate a dataset")
    g.add_argument("problem", nargs="?", help=f"one of {sorted(PROBLEMS)}")
    g.add_argument("count", nargs="?", type=int)
    sub.add_parser("train", parents=[common], help="train models")
    e = sub.add_parser("eval", parents=[common], help="zero-shot evaluation")
    e.add_argument("--emit-grids", action="store_true", help="write predicted grids")
    sub.add_parser("gridsearch", parents=[common], help="lambda grid search on seen instances")
    sub.add_parser("bench", parents=[common], help="adaptation latency and PINN speedup")
    return ap


def _gather_config(args) -> tuple[dict, Path]:
    if args.config:
        cfg, base = load_config(args.config)
    else:
        cfg, base = {}, Path.cwd()
    if not isinstance(cfg, dict):
        return cfg, base
    if args.verb == "gen":
        if args.problem is not None:
            cfg["problem"] = args.problem
        if args.count is not None:
            cfg["count"] = args.count
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg, base


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError(f"--threads: must be >= 1, got {n}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg, base = _gather_config(args)
        errors = validate(args.verb, cfg)
        if errors:
            raise ConfigError("; ".join(errors))
        out = _out_dir(args)
        with _thread_limit(args.threads):
            if args.verb == "eval":
                cmd_eval(cfg, out, base, emit_grids=args.emit_grids)
            else:
                {"gen": cmd_gen, "train": cmd_train, "gridsearch": cmd_gridsearch,
                 "bench": cmd_bench}[args.verb](cfg, out, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
