"""Benchmark PDE families, dataset generation and on-disk layout."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .base import Collocation, Dataset, PdeInstance, Problem, ProblemSpec, rel_l2
from .burgers import BurgersFamily, BurgersSine, reference_solve_family
from .helmholtz import Helmholtz
from .poisson import Poisson

PROBLEMS = {
    "poisson": Poisson,
    "helmholtz": Helmholtz,
    "burgers-sine": BurgersSine,
    "burgers-family": BurgersFamily,
}

DEFAULT_COUNTS = {"poisson": 100, "helmholtz": 100, "burgers-sine": 50, "burgers-family": 480}

DATASET_FORMAT = "pipinn-dataset"
DATASET_VERSION = 1


def get_problem(name: str, **options) -> Problem:
    try:
        cls = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return cls(**options)


def make_dataset(name: str, count: int | None = None, seed: int = 0, progress=None,
                 **options) -> Dataset:
    """Sample ``count`` instances with independent per-instance RNG streams
    derived from ``seed`` and compute their reference grids."""
    count = DEFAULT_COUNTS[name] if count is None else count
    if count < 2:
        raise ValueError("count must be >= 2")
    problem = get_problem(name, **options)
    streams = np.random.SeedSequence(seed).spawn(count)
    instances = []
    for i, ss in enumerate(streams):
        theta = problem.sample_theta(np.random.default_rng(ss))
        instances.append(problem.make_instance(theta, instance_id=i))
        if progress is not None:
            progress(i + 1, count)
    return Dataset(problem, instances, seed, dict(options))


def poisson_make(count: int = 100, seed: int = 0) -> Dataset:
    return make_dataset("poisson", count, seed)


def helmholtz_make(count: int = 100, seed: int = 0) -> Dataset:
    return make_dataset("helmholtz", count, seed)


def burgers_sine_make(count: int = 50, seed: int = 0) -> Dataset:
    return make_dataset("burgers-sine", count, seed)


def burgers_family_make(count: int = 480, seed: int = 0, **options) -> Dataset:
    return make_dataset("burgers-family", count, seed, **options)


def write_grid(path, grid) -> None:
    Path(path).write_bytes(np.ascontiguousarray(grid, dtype="<f8").tobytes())


def read_grid(path, shape) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f8").astype(np.float64).reshape(shape)


def save_dataset(dataset: Dataset, out) -> Path:
    """Write ``manifest.json`` plus one raw float64 grid per instance."""
    out = Path(out)
    (out / "grids").mkdir(parents=True, exist_ok=True)
    spec = dataset.problem.spec
    entries = []
    for inst in dataset.instances:
        rel = f"grids/{inst.instance_id:06d}.f64"
        write_grid(out / rel, inst.reference)
        entries.append({"id": inst.instance_id, "theta": [float(v) for v in inst.theta], "file": rel})
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "problem": spec.name,
        "options": dataset.options,
        "seed": dataset.seed,
        "count": len(dataset),
        "grid_shape": list(spec.grid_shape),
        "input_names": list(spec.input_names),
        "task_names": list(spec.task_names),
        "dtype": "<f8",
        "order": "C",
        "instances": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = json.loads(path.read_text())
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset format")
    problem = get_problem(manifest["problem"], **manifest.get("options", {}))
    shape = tuple(manifest["grid_shape"])
    instances = [PdeInstance(problem, np.array(e["theta"], dtype=np.float64), int(e["id"]),
                             read_grid(path.parent / e["file"], shape))
                 for e in manifest["instances"]]
    return Dataset(problem, instances, int(manifest["seed"]), dict(manifest.get("options", {})))


__all__ = [
    "Collocation", "Dataset", "PdeInstance", "Problem", "ProblemSpec", "rel_l2",
    "BurgersFamily", "BurgersSine", "Helmholtz", "Poisson", "reference_solve_family",
    "PROBLEMS", "get_problem", "make_dataset", "save_dataset", "load_dataset",
    "poisson_make", "helmholtz_make", "burgers_sine_make", "burgers_family_make",
]
