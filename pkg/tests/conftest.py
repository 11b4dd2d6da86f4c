"""Shared fixtures and independent reference implementations.

The reference routines here are written from the objective formulas alone and
deliberately avoid calling into the package, so tests compare two separately
derived answers rather than one implementation against itself.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from asyncdca import Dataset, from_dense


def conj_ref(kind: str, a: float, y: float) -> float:
    """phi*(-a) for label y, strict domains, written out longhand."""
    u = a * y
    if kind == "hinge":
        if 0.0 <= u <= 1.0:
            return -u
        return math.inf
    if kind == "squared-hinge":
        if u >= 0.0:
            return -u + u * u / 4.0
        return math.inf
    if kind == "logistic":
        if u < 0.0 or u > 1.0:
            return math.inf
        ent = 0.0
        if u > 0.0:
            ent += u * math.log(u)
        if u < 1.0:
            ent += (1.0 - u) * math.log(1.0 - u)
        return ent
    raise ValueError(kind)


def primal_ref(kind: str, z: float, y: float) -> float:
    m = y * z
    if kind == "hinge":
        return max(0.0, 1.0 - m)
    if kind == "squared-hinge":
        return max(0.0, 1.0 - m) ** 2
    if kind == "logistic":
        return math.log1p(math.exp(-abs(m))) + max(0.0, -m)
    raise ValueError(kind)


def ternary_max(f, lo: float, hi: float, iters: int = 160) -> float:
    """Argmax of a unimodal f on [lo, hi] by golden-ratio-free thirds."""
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) < f(m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def _conj_ref_ld(kind: str, u):
    """Conjugate in u = a*y, evaluated in extended precision."""
    one = np.longdouble(1.0)
    if kind == "hinge":
        return -u
    if kind == "squared-hinge":
        return -u + u * u / np.longdouble(4.0)
    if kind == "logistic":
        ent = np.longdouble(0.0)
        if u > 0.0:
            ent += u * np.log(u)
        if u < one:
            ent += (one - u) * np.log(one - u)
        return ent
    raise ValueError(kind)


def step_objective_ref(kind: str, a: float, y: float, v_dot_x: float,
                       curvature: float, conj_weight: float):
    """The 1-D restriction of the local subproblem (times n), as a closure
    over the feasible range in u = (a + eps) * y, together with that range.

    Evaluated in extended precision so a ternary search on it can resolve
    the argmax beyond float64 comparison noise near a flat top.
    """
    u0 = np.longdouble(a) * np.longdouble(y)
    yl = np.longdouble(y)
    vdx = np.longdouble(v_dot_x)
    curv = np.longdouble(curvature)
    cw = np.longdouble(conj_weight)

    def g(u):
        eps = yl * (np.longdouble(u) - u0)
        return (-cw * _conj_ref_ld(kind, np.longdouble(u)) - vdx * eps
                - np.longdouble(0.5) * curv * eps * eps)

    if kind in ("hinge", "logistic"):
        u_lo, u_hi = 0.0, 1.0
    else:
        # concave objective: pad the bracket past the derivative's sign change
        u_lo = 0.0
        u_hi = float(u0) + (conj_weight + abs(v_dot_x)
                            + curvature * (1.0 + abs(float(u0)))) / curvature + 1.0
    return g, u_lo, u_hi


def ternary_step_oracle(kind: str, a: float, y: float, v_dot_x: float,
                        curvature: float, conj_weight: float) -> float:
    """Step size found by ternary search over the feasible u range."""
    g, u_lo, u_hi = step_objective_ref(kind, a, y, v_dot_x, curvature, conj_weight)
    u_star = ternary_max(g, u_lo, u_hi)
    return y * u_star - a


def make_gaussian_dataset(n: int, d: int, seed: int, separation: float = 1.5) -> Dataset:
    """Two-class Gaussian data with unit-norm rows."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=d)
    mu /= np.linalg.norm(mu)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = rng.normal(size=(n, d)) * 0.7 + np.outer(y, mu) * separation
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    return from_dense(X, y)


@pytest.fixture(scope="session")
def gauss2000() -> Dataset:
    return make_gaussian_dataset(2000, 50, seed=42)


@pytest.fixture(scope="session")
def small200() -> Dataset:
    return make_gaussian_dataset(200, 12, seed=5)
