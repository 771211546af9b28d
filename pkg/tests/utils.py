from pathlib import Path

import numpy as np

from pinnobs.integrator import build_dataset
from pinnobs.integrator import simulate
from pinnobs.network import LayerSpec
from pinnobs.network import NetworkParams
from pinnobs.systems import build_system

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def duffing_dataset(train_fraction: float = 1.0, split_seed: int = 0):
    """Reverse Duffing sampled at 10 points (T=0.018, dt=2e-3)."""
    sys = build_system("reverse_duffing")
    truth = simulate(sys, T=0.018)
    return sys, truth, build_dataset(truth, sys, split_seed, train_fraction)


def random_params(spec: LayerSpec, seed: int, scale: float = 0.5) -> NetworkParams:
    count = sum(int(np.prod(shape)) for shape in spec.shapes)
    vector = np.random.default_rng(seed).normal(scale=scale, size=count)
    return NetworkParams.from_flat(spec, vector, seed=seed)


def zero_params(spec: LayerSpec) -> NetworkParams:
    count = sum(int(np.prod(shape)) for shape in spec.shapes)
    return NetworkParams.from_flat(spec, np.zeros(count))


def linear_params(weight, bias) -> NetworkParams:
    """A network without hidden layer: output = weight * t + bias."""
    weight = np.asarray(weight, dtype=np.float64).reshape(-1, 1)
    bias = np.asarray(bias, dtype=np.float64)
    spec = LayerSpec(widths=(1, bias.size))
    return NetworkParams(spec=spec, weights=(weight,), biases=(bias,))


def zero_gain_head(params: NetworkParams, n_x: int) -> NetworkParams:
    """Copy of ``params`` whose gain outputs are identically zero."""
    weights = [np.array(w) for w in params.weights]
    biases = [np.array(b) for b in params.biases]
    weights[-1][n_x:, :] = 0.0
    biases[-1][n_x:] = 0.0
    return NetworkParams(
        spec=params.spec, weights=tuple(weights), biases=tuple(biases), seed=params.seed
    )


def write_config(path: Path, sections: dict) -> Path:
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {value}" for key, value in values.items())
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def small_sections(out: Path, **training) -> dict:
    """A reverse Duffing experiment that trains in well under a second."""
    return {
        "experiment": {"system": "reverse_duffing", "seed": 3, "out": str(out)},
        "simulation": {"horizon": 0.1},
        "network": {"depth": 2, "width": 5},
        "training": {"max_iters": 20, "patience": 20, "log_every": 5, **training},
    }
