"""Closed-form initial conditions, referenced by id from configs."""

from __future__ import annotations

import numpy as np


def half_exp_sin(p: np.ndarray) -> np.ndarray:
    return 0.5 * np.exp(np.sin(p[:, 0]))


def quartic(p: np.ndarray) -> np.ndarray:
    s = p[:, 0] / np.pi
    return s * (5 - 4 * s - 7 * s ** 2 + 6 * s ** 3)


def neg_sin(p: np.ndarray) -> np.ndarray:
    return -np.sin(p[:, 0])


def exp_sin_cos_2d(p: np.ndarray) -> np.ndarray:
    return 0.4 * np.exp(0.5 * (np.sin(p[:, 0]) - np.cos(p[:, 1])))


REGISTRY = {
    "half-exp-sin": half_exp_sin,
    "quartic": quartic,
    "neg-sin": neg_sin,
    "ex5-exp": exp_sin_cos_2d,
}


def get(name: str):
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown initial condition {name!r}; known ids: {sorted(REGISTRY)}") from None


def from_coefficients(basis, v) -> callable:
    """u0 given as a modal vector, evaluated anywhere through the basis functions."""
    v = basis.check_vector(np.asarray(v, dtype=float))
    return lambda p: basis.evaluate(p) @ v
