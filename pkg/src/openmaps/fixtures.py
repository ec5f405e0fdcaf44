"""Bundled example models and a seeded generator of random Markov models."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np
from numpy.polynomial import Polynomial

from .model import Branch, OpenMapModel, Partition, model_from_dict, validate

BUNDLED = ("tent", "cubic", "shift")


def bundled_model(name: str) -> OpenMapModel:
    """Load one of the bundled models: ``tent``, ``cubic`` or ``shift``."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled model {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("openmaps.data").joinpath(f"{name}.json").read_text()
    return model_from_dict(json.loads(text), name=name)


def tent_model() -> OpenMapModel:
    return bundled_model("tent")


def cubic_model() -> OpenMapModel:
    return bundled_model("cubic")


def shift_model() -> OpenMapModel:
    return bundled_model("shift")


def random_markov_model(rng: np.random.Generator, m_max: int = 6,
                        affine: bool = False, max_tries: int = 100) -> OpenMapModel:
    """Random accepted Markov model with at most ``m_max`` cells.

    Each branch maps its cell monotonically onto a random run of consecutive
    cells. Nonlinear branches compose the affine map with the warp
    ``u + a u(1-u) + b u(1-u)(1-2u)``, ``|a| + |b| < 0.9``, whose derivative
    stays above 0.1 on [0, 1].
    """
    for _ in range(max_tries):
        m = int(rng.integers(2, m_max + 1))
        while True:
            inner = np.sort(rng.uniform(0.05, 0.95, size=m - 1))
            cuts = np.concatenate([[0.0], inner, [1.0]])
            if np.min(np.diff(cuts)) > 0.03:
                break
        n_hole = int(rng.integers(1, m))
        hole = frozenset(int(i) + 1 for i in rng.choice(m, size=n_hole, replace=False))
        branches, images = [], []
        for i in range(1, m + 1):
            k = int(rng.integers(1, m + 1))
            j = int(rng.integers(0, m - k + 1))
            tlo, thi = cuts[j], cuts[j + k]
            lo, hi = cuts[i - 1], cuts[i]
            u = Polynomial([-lo / (hi - lo), 1.0 / (hi - lo)])
            if affine:
                warp = u
            else:
                a = rng.uniform(-0.6, 0.6)
                b = rng.uniform(-0.3, 0.3)
                warp = u + a * u * (1 - u) + b * u * (1 - u) * (1 - 2 * u)
            if rng.random() < 0.5:
                p = tlo + (thi - tlo) * warp
            else:
                p = thi - (thi - tlo) * warp
            coeffs = list(p.coef)
            if affine:
                branches.append(Branch.affine(coeffs[1], coeffs[0]))
            else:
                branches.append(Branch.poly(coeffs))
            images.append((float(tlo), float(thi)))
        model = OpenMapModel(Partition(tuple(cuts)), tuple(branches), hole,
                             tuple(images), name="random")
        if validate(model).accepted:
            return model
    raise RuntimeError("could not generate an accepted model")
