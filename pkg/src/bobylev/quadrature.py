"""Quadrature primitives shared by the kernel, Lévy and collision modules.

Three tools live here:

* composite Gauss-Legendre rules on graded meshes, where a power
  substitution ``theta = b * s**m`` absorbs an algebraic endpoint
  singularity at 0 and a logarithmic substitution handles steep but
  bounded integrands on ``[a, b]`` with ``a > 0``;
* a refinement driver that doubles the panel count until the value is
  Cauchy-converged, or flags divergence when the sequence grows
  geometrically;
* Filon-Legendre weights for ``int g(r) exp(i v r) dr`` that are exact
  for polynomial ``g`` of degree ``order - 1`` on each panel, for any ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander
from scipy.special import spherical_jn

#: growth factor per mesh doubling that counts as geometric blow-up
DIVERGENCE_RATIO = 1.5
#: number of consecutive geometric doublings needed to flag divergence
DIVERGENCE_STREAK = 3


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``order``-point rule on [-1, 1] (cached, read-only)."""
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on every panel ``[edges[k], edges[k+1]]``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def power_graded_rule(b: float, panels: int, order: int, grading: float):
    """Rule for ``int_0^b f(theta) dtheta`` with ``theta = b * s**m``.

    Returns theta nodes and the Jacobian-weighted weights, so that
    ``sum(w * f(nodes))`` approximates the integral. With
    ``f ~ theta**beta`` near 0 the transformed integrand behaves like
    ``s**(m*(beta+1) - 1)``; choose ``m`` so that exponent is >= 1.
    """
    s, ws = composite_rule(np.linspace(0.0, 1.0, panels + 1), order)
    m = float(grading)
    nodes = b * s**m
    weights = ws * b * m * s ** (m - 1.0)
    return nodes, weights


def log_graded_rule(a: float, b: float, panels: int, order: int):
    """Rule for ``int_a^b`` (``a > 0``) under ``theta = a * (b/a)**s``."""
    if not a > 0.0:
        raise ValueError("log grading needs a positive left endpoint")
    s, ws = composite_rule(np.linspace(0.0, 1.0, panels + 1), order)
    span = math.log(b / a)
    nodes = a * np.exp(s * span)
    return nodes, ws * nodes * span


def segment_rule(a: float, b: float, panels: int, order: int, grading: float):
    """Graded rule for one segment: power grading at 0, log grading otherwise."""
    if a == 0.0:
        return power_graded_rule(b, panels, order, grading)
    if b / a < 1.5:
        return composite_rule(np.linspace(a, b, panels + 1), order)
    return log_graded_rule(a, b, panels, order)


def grading_for_exponent(beta: float, floor: float = 1.0, cap: float = 40.0) -> float:
    """Power-grading exponent for an integrand ``~ theta**beta`` at 0.

    Integrable case (``beta > -1``): ``m = 2/(beta+1)`` makes the transformed
    integrand vanish linearly, i.e. smooth to leading order. Non-integrable
    case: ``m`` is large enough that each mesh doubling multiplies the
    partial integral by at least 2, which the divergence test detects.
    """
    e = beta + 1.0
    if e > 0.0:
        m = 2.0 / e
    elif e < 0.0:
        m = max(8.0, 1.0 / -e)
    else:
        m = 8.0
    return float(min(max(m, floor), cap))


@dataclass
class QuadResult:
    """Outcome of a refined quadrature."""

    value: float
    error: float
    divergent: bool = False
    converged: bool = True
    history: list[float] = field(default_factory=list)

    @property
    def flagged_value(self) -> float:
        """The value, or ``+inf`` when the integral was flagged divergent."""
        return math.inf if self.divergent else self.value


def refine(
    evaluate: Callable[[int], tuple[float, float]],
    panels0: int = 8,
    tol: float = 1e-13,
    max_doublings: int = 10,
) -> QuadResult:
    """Double the panel count until Cauchy convergence or geometric growth.

    ``evaluate(panels)`` returns ``(value, l1_scale)`` where ``l1_scale`` is
    the quadrature of ``|integrand|`` (used as an absolute floor so that
    integrals that vanish identically still converge).
    """
    history: list[float] = []
    panels = panels0
    value, scale = evaluate(panels)
    history.append(value)
    streak = 0
    for _ in range(max_doublings):
        panels *= 2
        new, scale = evaluate(panels)
        history.append(new)
        diff = abs(new - value)
        if diff <= tol * (abs(new) + scale) or diff == 0.0:
            return QuadResult(new, diff, history=history)
        if value != 0.0 and new / value >= DIVERGENCE_RATIO:
            streak += 1
            if streak >= DIVERGENCE_STREAK:
                return QuadResult(new, math.inf, divergent=True, converged=False, history=history)
        else:
            streak = 0
        value = new
    # no Cauchy convergence inside the refinement budget: treat as divergent
    diffs = np.abs(np.diff(history))
    shrinking = len(diffs) >= 3 and diffs[-1] < 0.6 * diffs[-2] < 0.36 * diffs[-3]
    if shrinking:
        return QuadResult(value, float(diffs[-1]), converged=False, history=history)
    return QuadResult(value, float(diffs[-1]), divergent=True, converged=False, history=history)


# ---------------------------------------------------------------------------
# Filon-Legendre oscillatory quadrature

@lru_cache(maxsize=16)
def _legendre_projection(order: int) -> np.ndarray:
    """Matrix ``C[k, j] = (2k+1)/2 * w_j * P_k(x_j)``: nodal values -> Legendre coefficients."""
    x, w = gauss_legendre(order)
    vander = legvander(x, order - 1)  # (j, k) -> P_k(x_j)
    k = np.arange(order)
    proj = (0.5 * (2 * k + 1))[:, None] * (vander.T * w[None, :])
    proj.setflags(write=False)
    return proj


def filon_weights(omega: np.ndarray, order: int) -> np.ndarray:
    """Weights ``W_j(omega) = int_{-1}^{1} l_j(x) exp(i omega x) dx``.

    ``l_j`` is the Lagrange basis on the Gauss-Legendre nodes; the moments use
    ``int P_k(x) exp(i omega x) dx = 2 i**k j_k(omega)``. Shape of the result
    is ``omega.shape + (order,)``.
    """
    omega = np.asarray(omega, dtype=float)
    k = np.arange(order)
    jk = spherical_jn(k, omega[..., None])  # (..., k)
    moments = 2.0 * (1j ** k) * jk
    return moments @ _legendre_projection(order)


def panel_edges(r_max: float, r_geo: float = 1.0, ratio: float = 0.5,
                r_tiny: float = 1e-14, width: float = 0.5) -> np.ndarray:
    """Edges that grade geometrically towards 0 and are uniform beyond ``r_geo``."""
    geo = [r_geo]
    while geo[-1] * ratio > r_tiny:
        geo.append(geo[-1] * ratio)
    left = np.array([0.0] + geo[::-1])
    n_uniform = max(1, int(math.ceil((r_max - r_geo) / width)))
    right = np.linspace(r_geo, r_max, n_uniform + 1)[1:]
    return np.concatenate([left, right])


def filon_sine_transform(g: Callable[[np.ndarray], np.ndarray], edges: np.ndarray,
                         v: np.ndarray, order: int = 16) -> np.ndarray:
    """``int g(r) sin(v r) dr`` over the panels in ``edges`` for every ``v``.

    Panels where ``v * halfwidth < 1`` fall back to plain Gauss-Legendre, which
    is already exact to rounding there.
    """
    edges = np.asarray(edges, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * x[None, :]  # (panel, j)
    gv = g(nodes)
    out = np.empty(v.shape)
    for i, vi in enumerate(v):
        omega = vi * half
        weights = np.empty((half.size, order), dtype=complex)
        small = omega < 1.0
        if np.any(small):
            # exp(i omega x) is entire and slowly varying: Gauss is exact enough
            weights[small] = w[None, :] * np.exp(1j * omega[small, None] * x[None, :])
        if np.any(~small):
            weights[~small] = filon_weights(omega[~small], order)
        phase = np.exp(1j * vi * mid)
        panel = half * phase * np.einsum("pj,pj->p", weights, gv)
        out[i] = np.sum(panel.imag)
    return out
