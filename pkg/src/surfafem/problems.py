"""
Closed-form test problems: data ``f`` on the surface and, where known, the
exact solution with its tangential gradient.
"""
from __future__ import annotations

import numpy as np

from .fem import ProblemData


def _tangential(grad, nu):
    return grad - np.sum(grad * nu, axis=-1, keepdims=True) * nu


def sphere_manufactured(radius=1.0) -> ProblemData:
    """``u = x1 x2`` on a sphere; ``-Lap u = 6 u / R^2``."""
    R2 = float(radius) ** 2

    def u(x):
        return x[..., 0] * x[..., 1]

    def f(x):
        return 6.0 * x[..., 0] * x[..., 1] / R2

    def grad_u(x):
        g = np.stack([x[..., 1], x[..., 0], np.zeros_like(x[..., 0])], axis=-1)
        return g - (2.0 * x[..., 0] * x[..., 1] / R2)[..., None] * x

    return ProblemData(f=f, u=u, grad_u=grad_u, name="sphere_manufactured")


HALF_SPHERE_EXPONENT = 0.6


def half_sphere_singular(a=HALF_SPHERE_EXPONENT) -> ProblemData:
    """``u = sin(phi) sin(theta)^a`` on the unit upper half sphere (pole singularity).

    With ``rho = sqrt(x^2 + y^2) = sin(theta)`` the solution is ``y rho^(a-1)``;
    the equator carries the Dirichlet data ``u = y``.
    """
    a = float(a)

    def _unit(x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def u(x):
        x = _unit(x)
        rho = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(rho > 0, rho, 1.0)
        return np.where(rho > 0, x[..., 1] * safe ** (a - 1.0), 0.0)

    def f(x):
        x = _unit(x)
        rho = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(rho > 0, rho, 1.0)
        sphi = x[..., 1] / safe
        cth2 = x[..., 2] ** 2
        lap = sphi * (safe ** (a - 2.0) * (a * a * cth2 - 1.0) - a * safe**a)
        return np.where(rho > 0, -lap, 0.0)

    def grad_u(x):
        x = _unit(x)
        rho = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(rho > 0, rho, 1.0)
        c = (a - 1.0) * safe ** (a - 3.0)
        g = np.stack(
            [c * x[..., 0] * x[..., 1], safe ** (a - 1.0) + c * x[..., 1] ** 2, np.zeros_like(rho)], axis=-1
        )
        return _tangential(g, x)

    return ProblemData(f=f, u=u, grad_u=grad_u, singularities=((0.0, 0.0, 1.0),), name="half_sphere")


def graph_unit_load() -> ProblemData:
    """``f = 1`` with homogeneous Dirichlet data; no closed-form solution."""
    return ProblemData(
        f=lambda x: np.ones(np.shape(x)[:-1]), dirichlet=lambda x: np.zeros(np.shape(x)[:-1]), name="graph"
    )


def flat_quadratic() -> ProblemData:
    """``u = x^2 + x y + y^2`` on a planar patch, reproduced exactly by ``r >= 2``."""

    def u(x):
        return x[..., 0] ** 2 + x[..., 0] * x[..., 1] + x[..., 1] ** 2

    def grad_u(x):
        return np.stack([2 * x[..., 0] + x[..., 1], x[..., 0] + 2 * x[..., 1], np.zeros_like(x[..., 0])], axis=-1)

    return ProblemData(f=lambda x: np.full(np.shape(x)[:-1], -4.0), u=u, grad_u=grad_u, name="flat_reference")


def flat_sine() -> ProblemData:
    """``u = sin(pi x) sin(pi y)`` on the unit square, zero on the boundary."""
    pi = np.pi

    def u(x):
        return np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

    def grad_u(x):
        s, t = pi * x[..., 0], pi * x[..., 1]
        return np.stack([pi * np.cos(s) * np.sin(t), pi * np.sin(s) * np.cos(t), np.zeros_like(s)], axis=-1)

    return ProblemData(f=lambda x: 2 * pi**2 * u(x), u=u, grad_u=grad_u, name="flat_sine")
