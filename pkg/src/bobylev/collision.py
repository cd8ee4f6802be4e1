"""Fourier-side Maxwellian collision operator.

For an isotropic characteristic function the circle integral around the
direction of ``xi`` is trivial and

    B(phi)(r) = 2 pi int_0^{pi/2} b sin(theta) [phi(r c) phi(r s) - phi(r)] dtheta,

with ``c = cos(theta/2)`` and ``s = sin(theta/2)``. In ``split`` mode the
bracket is assembled as ``(phi(r s) - 1) phi(r c) + (phi(r c) - phi(r))`` from
accurately stored deviations, so the ``theta -> 0`` end, where a singular
kernel puts all its weight, carries no cancellation error.

The general form integrates over ``(theta, omega)`` with ``omega`` on the
unit circle orthogonal to ``xi`` and accepts any callable on R^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels as K
from .charfun import InequalityReport, RadialCharFn, kalpha_norm
from .quadrature import DIVERGENCE_RATIO, DIVERGENCE_STREAK, segment_rule

HALF_PI = 0.5 * math.pi
#: grading exponent ceiling for very weak anchors (alpha close to nu - 1)
MAX_GRADING = 30.0


class NonCutoffError(ValueError):
    """The gain operator needs ``||b||_1 < inf``."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Angular quadrature settings.

    ``grading`` is the exponent ``m`` of the mesh ``theta = (pi/2) s**m`` on
    the untruncated segment; ``None`` picks it from the kernel singularity and
    the anchor exponent of ``phi``. ``adaptive`` doubles ``panels`` until every
    node is Cauchy-converged to ``tol``; divergent nodes come back as ``nan``.
    """

    panels: int = 16
    gauss_order: int = 8
    grading: Optional[float] = None
    tol: float = 1e-10
    cancellation_mode: str = "split"
    adaptive: bool = False
    omega_points: int = 32
    max_doublings: int = 8

    def __post_init__(self):
        if self.panels < 4:
            raise ValueError("QuadratureSpec.panels must be >= 4")
        if not self.tol > 0:
            raise ValueError("QuadratureSpec.tol must be positive")
        if self.cancellation_mode not in ("direct", "split"):
            raise ValueError("cancellation_mode must be 'direct' or 'split'")
        if self.grading is not None and self.grading < 1.0:
            raise ValueError("grading exponent must be >= 1")
        if self.omega_points < 4 or self.omega_points % 2:
            raise ValueError("omega_points must be an even number >= 4")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def grading_for(model: K.KernelModel, anchor_exponent: float = 2.0) -> float:
    """``m = 2 / (a - nu + 1)`` so that ``theta**(a - nu)`` becomes smooth; at least 4."""
    e = anchor_exponent - model.nu + 1.0
    m = 2.0 / e if e > 0 else MAX_GRADING
    return float(min(max(4.0, m), MAX_GRADING))


@lru_cache(maxsize=256)
def theta_rule(model: K.KernelModel, panels: int, order: int, grading: float):
    """Nodes ``theta_k`` and weights ``2 pi w_k b(cos theta_k) sin(theta_k)``."""
    cuts = [model.lower_angle] + model.breakpoints() + [HALF_PI]
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        th, w = segment_rule(a, b, panels, order, grading)
        nodes.append(th)
        weights.append(2.0 * math.pi * w * model.weight(th))
    th = np.concatenate(nodes)
    w = np.concatenate(weights)
    th.setflags(write=False)
    w.setflags(write=False)
    return th, w


def discrete_l1(model: K.KernelModel, spec: QuadratureSpec, anchor_exponent: float = 2.0) -> float:
    """``||b||_1`` as seen by the rule, i.e. the sum of the angular weights."""
    m = spec.grading if spec.grading is not None else grading_for(model, anchor_exponent)
    return float(np.sum(theta_rule(model, spec.panels, spec.gauss_order, m)[1]))


# ---------------------------------------------------------------------------
# isotropic operator

class _Radial:
    """Uniform ``(value, deviation)`` access to a RadialCharFn or a plain radial callable."""

    def __init__(self, phi):
        self.phi = phi
        self.grid_fn = isinstance(phi, RadialCharFn)

    def evaluate(self, x: np.ndarray):
        if self.grid_fn:
            v, d = self.phi.evaluate(x.ravel())
            return v.reshape(x.shape), d.reshape(x.shape)
        v = np.asarray(self.phi(x), dtype=float)
        return v, v - 1.0

    @property
    def anchor_exponent(self) -> float:
        return self.phi.near_origin_model[1] if self.grid_fn else 2.0


def _bracket(fn: _Radial, r: np.ndarray, theta: np.ndarray, mode: str, gain: Optional[str] = None):
    half = 0.5 * theta
    rc = r[:, None] * np.cos(half)[None, :]
    rs = r[:, None] * np.sin(half)[None, :]
    vc, dc = fn.evaluate(rc)
    vs, ds = fn.evaluate(rs)
    if gain == "value":
        return vc * vs
    if gain == "deviation":
        return dc + ds + dc * ds
    v0, d0 = fn.evaluate(r)
    direct = vc * vs - v0[:, None]
    if mode == "split":
        # deviations are exact near the origin; the plain product keeps relative accuracy where phi is small
        split = ds * vc + (dc - d0[:, None])
        return np.where((np.abs(v0) < 0.5)[:, None], direct, split)
    return direct


def _apply(fn: _Radial, model: K.KernelModel, r: np.ndarray, spec: QuadratureSpec, gain: Optional[str]):
    m = spec.grading if spec.grading is not None else grading_for(model, fn.anchor_exponent)

    def evaluate(panels: int):
        th, w = theta_rule(model, panels, spec.gauss_order, m)
        br = _bracket(fn, r, th, spec.cancellation_mode, gain)
        return br @ w, np.abs(br) @ np.abs(w)

    value, scale = evaluate(spec.panels)
    if not spec.adaptive:
        return value
    # per-node Cauchy refinement with geometric-growth divergence flag
    done = np.zeros(r.shape, dtype=bool)
    streak = np.zeros(r.shape, dtype=int)
    divergent = np.zeros(r.shape, dtype=bool)
    panels = spec.panels
    for _ in range(spec.max_doublings):
        panels *= 2
        new, scale = evaluate(panels)
        diff = np.abs(new - value)
        # brackets carry absolute round-off ~eps, which the weights amplify near a singular end
        floor = 8.0 * np.finfo(float).eps * float(np.sum(np.abs(theta_rule(model, panels, spec.gauss_order, m)[1])))
        done |= diff <= spec.tol * (np.abs(new) + scale) + floor
        with np.errstate(divide="ignore", invalid="ignore"):
            growing = np.abs(new) >= DIVERGENCE_RATIO * np.abs(value)
        streak = np.where(growing & ~done, streak + 1, 0)
        divergent |= streak >= DIVERGENCE_STREAK
        value = np.where(done, value, new)
        if np.all(done | divergent):
            break
    value = np.where(done & ~divergent, value, np.nan)
    return value


def _singular_and_weak(model: K.KernelModel, fn: _Radial) -> bool:
    return (not model.is_cutoff) and fn.anchor_exponent - model.nu <= -1.0 + 1e-9


def bobylev_isotropic(phi, model: K.KernelModel, r, spec: QuadratureSpec = QuadratureSpec()):
    """``B(phi)(r)`` for a radial ``phi`` (RadialCharFn or callable of ``|xi|``).

    Vectorised over ``r``; returns ``nan`` where the integral diverges (for a
    non-cutoff kernel, an anchor exponent ``a <= nu - 1``).
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0.0):
        raise ValueError("r must be nonnegative")
    fn = _Radial(phi)
    out = np.zeros(r_arr.shape)
    pos = r_arr > 0.0
    if np.any(pos):
        if _singular_and_weak(model, fn):
            out[pos] = np.nan
        else:
            out[pos] = _apply(fn, model, r_arr[pos], spec, gain=None)
    return float(out[0]) if np.ndim(r) == 0 else out


def gain_isotropic(phi, model: K.KernelModel, r, spec: QuadratureSpec = QuadratureSpec()):
    """``G(phi)(r)``; at ``r = 0`` returns ``||b||_1``."""
    b1 = K.l1_norm(model)
    if not math.isfinite(b1):
        raise NonCutoffError("gain operator requires a cutoff kernel")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    fn = _Radial(phi)
    out = np.full(r_arr.shape, b1)
    pos = r_arr > 0.0
    if np.any(pos):
        out[pos] = _apply(fn, model, r_arr[pos], spec, gain="value")
    return float(out[0]) if np.ndim(r) == 0 else out


def gain_deviation(phi, model: K.KernelModel, r, spec: QuadratureSpec = QuadratureSpec()):
    """``G(phi)(r) - gamma_h`` with ``gamma_h`` the rule's own ``||b||_1``, free of cancellation."""
    if not model.is_cutoff:
        raise NonCutoffError("gain operator requires a cutoff kernel")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros(r_arr.shape)
    pos = r_arr > 0.0
    if np.any(pos):
        out[pos] = _apply(_Radial(phi), model, r_arr[pos], spec, gain="deviation")
    return float(out[0]) if np.ndim(r) == 0 else out


def loss_rate(phi, model: K.KernelModel, r, spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """``l(r) = 2 pi int b sin(theta) [1 - phi(r s)] dtheta``, finite for non-cutoff kernels.

    ``B(phi) + l phi`` keeps only differences ``phi(r c) - phi(r)``, so this is
    the part of the operator acting on ``phi(r)`` itself.
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    fn = _Radial(phi)
    m = spec.grading if spec.grading is not None else grading_for(model, fn.anchor_exponent)
    th, w = theta_rule(model, spec.panels, spec.gauss_order, m)
    ds = fn.evaluate(r_arr[:, None] * np.sin(0.5 * th)[None, :])[1]
    return np.maximum(-(ds @ w), 0.0)


def collision_on_grid(phi: RadialCharFn, model: K.KernelModel, spec: QuadratureSpec = QuadratureSpec(),
                      gain: bool = False) -> np.ndarray:
    """``B(phi)`` (or ``G(phi)``) at every grid node."""
    f = gain_isotropic if gain else bobylev_isotropic
    return np.asarray(f(phi, model, phi.grid.nodes, spec))


# ---------------------------------------------------------------------------
# general (theta, omega) form

def orthonormal_frame(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit ``e = xi/|xi|`` and an orthonormal pair spanning ``xi``'s orthogonal plane."""
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi)
    if n == 0.0:
        raise ValueError("xi must be nonzero")
    e = xi / n
    helper = np.eye(3)[int(np.argmin(np.abs(e)))]
    u = np.cross(e, helper)
    u /= np.linalg.norm(u)
    w = np.cross(e, u)
    return e, u, w


@dataclass
class CircleIntegral:
    total: complex
    part1: complex
    part2: complex
    part3: complex


def _circle_terms(phi, xi, theta, omega_points, deviation=None):
    """The three pieces of the circle integral at each ``theta`` (vectorised)."""
    xi = np.asarray(xi, dtype=float)
    e, u, w = orthonormal_frame(xi)
    nxi = np.linalg.norm(xi)
    psi = 2.0 * math.pi * np.arange(omega_points) / omega_points
    omega = np.cos(psi)[:, None] * u + np.sin(psi)[:, None] * w  # (P, 3)
    dpsi = 2.0 * math.pi / omega_points
    theta = np.atleast_1d(theta)
    c = np.cos(0.5 * theta)[:, None, None]
    s = np.sin(0.5 * theta)[:, None, None]
    sig_p = c * e + s * omega
    sig_m = s * e - c * omega
    sig_ps = c * e - s * omega
    xp = nxi * c * sig_p
    xm = nxi * s * sig_m
    xps = nxi * c * sig_ps
    mid = nxi * (c[..., 0] ** 2) * e  # (T, 3)
    dev = deviation if deviation is not None else (lambda x: phi(x) - 1.0)
    fp, fps = phi(xp), phi(xps)
    dm = dev(xm)
    dmid = dev(mid)
    d0 = dev(xi[None, :])[0]
    dp, dps = dev(xp), dev(xps)
    part1 = 0.5 * (dp + dps - 2.0 * dmid[:, None]).sum(axis=1) * dpsi
    part2 = (dmid - d0) * omega_points * dpsi
    part3 = (fp * dm).sum(axis=1) * dpsi
    return part1, part2, part3


def circle_integral(phi, xi, theta: float, omega_points: int = 32, deviation=None) -> CircleIntegral:
    """``int_{S^1(xi)} [phi(xi+) phi(xi-) - phi(xi)] domega`` split into its three parts."""
    p1, p2, p3 = _circle_terms(phi, xi, np.array([theta]), omega_points, deviation)
    return CircleIntegral(complex(p1[0] + p2[0] + p3[0]), complex(p1[0]), complex(p2[0]), complex(p3[0]))


def bobylev_general(phi: Callable[[np.ndarray], np.ndarray], model: K.KernelModel, xi,
                    spec: QuadratureSpec = QuadratureSpec(), deviation=None, anchor_exponent: float = 2.0):
    """``B(phi)(xi)`` for a callable ``phi`` on arrays of shape ``(..., 3)``.

    ``deviation`` optionally supplies ``phi - 1`` accurately. Returns a real
    number when ``phi`` is real-valued, complex otherwise.
    """
    m = spec.grading if spec.grading is not None else grading_for(model, anchor_exponent)
    th, w = theta_rule(model, spec.panels, spec.gauss_order, m)
    p1, p2, p3 = _circle_terms(phi, xi, th, spec.omega_points, deviation)
    # the rule's weights carry the 2 pi of the trivial circle; the circle is explicit here
    val = np.dot(p1 + p2 + p3, w) / (2.0 * math.pi)
    return complex(val) if np.iscomplexobj(val) else float(val)


def radial_to_3d(phi) -> tuple[Callable, Callable]:
    """Wrap a radial function as ``(phi(x), phi(x) - 1)`` callables on R^3."""
    fn = _Radial(phi)

    def value(x):
        return fn.evaluate(np.linalg.norm(x, axis=-1))[0]

    def dev(x):
        return fn.evaluate(np.linalg.norm(x, axis=-1))[1]

    return value, dev


# ---------------------------------------------------------------------------
# bounds

def verify_operator_bound(phi: RadialCharFn, model: K.KernelModel, alpha: float, r_samples,
                          spec: QuadratureSpec = QuadratureSpec(), tol: float = 1e-12) -> list[InequalityReport]:
    """``|B(phi)(r)| <= 5 mu_alpha ||phi - 1||_alpha r**alpha`` at each sample."""
    mu = K.moment_mu_alpha(model, alpha)
    norm = kalpha_norm(phi, alpha)
    r = np.asarray(r_samples, dtype=float)
    lhs = np.abs(np.atleast_1d(bobylev_isotropic(phi, model, r, spec)))
    return [InequalityReport("operator_bound", float(a), float(5 * mu * norm * ri**alpha), (float(ri),), tol)
            for a, ri in zip(lhs, r)]


def verify_circle_bound(phi, xi, alpha: float, norm: float, thetas: Sequence[float],
                        omega_points: int = 32, deviation=None, tol: float = 1e-12) -> list[InequalityReport]:
    """``|circle integral| <= 10 pi N |xi|^alpha sin^alpha(theta/2)`` at sampled angles."""
    nxi = float(np.linalg.norm(xi))
    th = np.asarray(thetas, dtype=float)
    p1, p2, p3 = _circle_terms(phi, xi, th, omega_points, deviation)
    total = np.abs(p1 + p2 + p3)
    return [InequalityReport("circle_bound", float(t), float(10 * math.pi * norm * nxi**alpha * math.sin(0.5 * a) ** alpha),
                             (nxi, float(a)), tol) for t, a in zip(total, th)]


def truncation_remainder_bound(model: K.KernelModel, n: int, norm: float, alpha: float, r) -> np.ndarray:
    """``10 pi N r^alpha int_0^{1/n} b sin(theta) sin^alpha(theta/2) dtheta`` for the tail ``b - b_n``."""
    tail_mu = K.moment_mu_alpha(model, alpha) - K.moment_mu_alpha(model.truncate(n), alpha)
    return 10 * math.pi * norm * np.asarray(r, dtype=float) ** alpha * tail_mu / (2 * math.pi)


def with_grading(spec: QuadratureSpec, grading: Optional[float]) -> QuadratureSpec:
    return replace(spec, grading=grading)
