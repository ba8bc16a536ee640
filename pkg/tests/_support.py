"""Smooth manufactured solutions shared by several test modules."""

import numpy as np

from qlpdae.core import BoundarySpec, Dirichlet, Free, InitialSpec, Problem
from qlpdae.stability import manufactured_source

PI = np.pi


def plasma_like_exact(t, x):
    x = np.asarray(x, dtype=float)
    return np.stack(
        [
            0.5 + 0.3 * np.sin(PI * x) * np.exp(-t),
            0.2 + 0.1 * x * np.cos(t),
            0.3 + 0.1 * x**2 * (1 + t),
            0.05 * np.sin(2 * PI * x) * np.cos(t),
        ],
        axis=-1,
    )


def _v_t(t, x):
    return np.stack(
        [
            -0.3 * np.sin(PI * x) * np.exp(-t),
            -0.1 * x * np.sin(t),
            0.1 * x**2,
            -0.05 * np.sin(2 * PI * x) * np.sin(t),
        ],
        axis=-1,
    )


def _v_x(t, x):
    return np.stack(
        [
            0.3 * PI * np.cos(PI * x) * np.exp(-t),
            0.1 * np.cos(t) + 0 * x,
            0.2 * x * (1 + t),
            0.1 * PI * np.cos(2 * PI * x) * np.cos(t),
        ],
        axis=-1,
    )


def _v_xx(t, x):
    return np.stack(
        [
            -0.3 * PI**2 * np.sin(PI * x) * np.exp(-t),
            0 * x,
            0.2 * (1 + t) + 0 * x,
            -0.2 * PI**2 * np.sin(2 * PI * x) * np.cos(t),
        ],
        axis=-1,
    )


def plasma_like_problem(system):
    """Plasma system driven by the source that makes ``plasma_like_exact`` exact.

    Boundary kinds follow the plasma model: ``u2`` and ``u3`` free on the right.
    """

    def value(i, x):
        return Dirichlet(lambda t: float(plasma_like_exact(t, np.array([x]))[0, i]))

    left = tuple(value(i, 0.0) for i in range(4))
    right = (value(0, 1.0), Free(), Free(), value(3, 1.0))
    iv = InitialSpec(tuple((lambda i: (lambda x: plasma_like_exact(0.0, x)[..., i]))(i) for i in range(4)))
    f = manufactured_source(system, _v_t, _v_x, _v_xx, plasma_like_exact)
    return Problem(system, iv, BoundarySpec(left, right), f)
