"""Maxwellian collision kernels and their angular moment constants.

A kernel is the function ``b(cos theta)`` on ``theta in (0, pi/2]``. All
moments are angular integrals of the form

    2 pi * int_0^{pi/2} b(cos theta) sin(theta) w(theta) dtheta

and are computed on a graded Gauss-Legendre mesh whose grading is derived
from the kernel's singularity exponent, so that ``theta**(-3/2)``-type
weights are integrated without brute refinement. A divergent moment is
reported as ``math.inf``, never raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .quadrature import QuadResult, grading_for_exponent, refine, segment_rule

HALF_PI = 0.5 * math.pi
FAMILIES = ("constant", "maxwellian_singular", "custom")

#: default tolerance of the moment refinement loop (relative to the L1 scale)
MOMENT_TOL = 1e-13


@dataclass(frozen=True)
class Truncation:
    """Angular cutoff ``b_n = b * 1[theta >= 1/n]``, optionally capped ``b_n ^ n``."""

    n: int
    cap: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"truncation order must be a positive integer, got {self.n!r}")

    @property
    def lower_angle(self) -> float:
        return 1.0 / self.n

    @property
    def bound(self) -> float:
        return float(self.n) if self.cap else math.inf


@dataclass(frozen=True)
class KernelModel:
    """Collision kernel ``b(cos theta)`` supported on ``(0, pi/2]``.

    ``scale`` is the constant ``c`` for the constant family and the amplitude
    ``kappa`` for the singular family, whose concrete form is
    ``b(cos theta) sin(theta) = kappa * theta**(-3/2)``.

    For ``family="custom"`` the kernel is tabulated: ``table = (thetas, bs)``
    and ``b sin(theta) theta**nu`` is interpolated linearly between the nodes
    (held constant outside), so the declared singularity is reproduced exactly.
    """

    family: str
    scale: float = 1.0
    singularity_exponent: Optional[float] = None
    truncation: Optional[Truncation] = None
    table: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = field(default=None, compare=True)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.scale < 0:
            raise ValueError("kernel scale must be nonnegative")
        if self.singularity_exponent is None:
            nu = {"constant": -1.0, "maxwellian_singular": 1.5, "custom": 0.0}[self.family]
            object.__setattr__(self, "singularity_exponent", nu)
        if self.family == "custom":
            if self.table is None:
                raise ValueError("custom kernel needs a (theta, b) table")
            th, bv = (tuple(float(x) for x in col) for col in self.table)
            if len(th) != len(bv) or len(th) < 2:
                raise ValueError("custom kernel table columns must have equal length >= 2")
            if any(x <= 0 or x > HALF_PI for x in th) or any(np.diff(th) <= 0):
                raise ValueError("custom kernel angles must increase inside (0, pi/2]")
            if any(x < 0 for x in bv):
                raise ValueError("custom kernel values must be nonnegative")
            object.__setattr__(self, "table", (th, bv))

    # -- evaluation -----------------------------------------------------------

    @property
    def nu(self) -> float:
        return float(self.singularity_exponent)

    @property
    def lower_angle(self) -> float:
        return self.truncation.lower_angle if self.truncation else 0.0

    @property
    def is_cutoff(self) -> bool:
        """True when ``||b||_1`` is finite (truncated, or singularity weaker than 1/theta)."""
        return self.truncation is not None or self.nu < 1.0 or self.scale == 0.0

    def _weight_raw(self, theta: np.ndarray) -> np.ndarray:
        """Untruncated ``b(cos theta) sin(theta)``."""
        if self.family == "constant":
            return self.scale * np.sin(theta)
        if self.family == "maxwellian_singular":
            return self.scale * theta ** (-self.nu)
        th, bv = (np.asarray(c) for c in self.table)
        regular = bv * np.sin(th) * th**self.nu
        return np.interp(theta, th, regular) * theta ** (-self.nu)

    def weight(self, theta) -> np.ndarray:
        """``b(cos theta) sin(theta)`` with truncation and cap applied (vectorised, no checks)."""
        theta = np.asarray(theta, dtype=float)
        out = self._weight_raw(theta)
        if self.truncation is not None:
            out = np.where(theta >= self.truncation.lower_angle, out, 0.0)
            if self.truncation.cap:
                s = np.sin(theta)
                out = np.minimum(out, self.truncation.bound * s)
        return out

    def breakpoints(self) -> list[float]:
        """Interior angles where the (truncated, capped) weight is not smooth."""
        pts: list[float] = []
        lo = self.lower_angle
        if self.family == "custom":
            pts.extend(t for t in self.table[0] if lo < t < HALF_PI)
        if self.truncation is not None and self.truncation.cap:
            bound = self.truncation.bound
            excess = lambda th: self._weight_raw(np.array(th)) / math.sin(th) - bound
            a = max(lo, 1e-12)
            fa, fb = excess(a), excess(HALF_PI)
            if fa > 0 > fb:
                pts.append(brentq(excess, a, HALF_PI, xtol=1e-15, rtol=1e-15))
        return sorted(set(pts))

    def truncate(self, n: int, cap: bool = False) -> "KernelModel":
        """The kernel ``b_n``, or ``b_n ^ n`` when ``cap`` is set."""
        if self.truncation is not None:
            raise ValueError("kernel is already truncated")
        return replace(self, truncation=Truncation(int(n), cap))

    # -- (de)serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "kappa_or_c": self.scale,
            "singularity_exponent": self.nu,
            "truncation": None if self.truncation is None
            else {"n": self.truncation.n, "cap": self.truncation.cap},
        }
        if self.table is not None:
            out["table"] = {"theta": list(self.table[0]), "b": list(self.table[1])}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KernelModel":
        trunc = data.get("truncation")
        table = data.get("table")
        return cls(
            family=data["family"],
            scale=float(data.get("kappa_or_c", 1.0)),
            singularity_exponent=data.get("singularity_exponent"),
            truncation=None if not trunc else Truncation(int(trunc["n"]), bool(trunc.get("cap", False))),
            table=None if table is None else (tuple(table["theta"]), tuple(table["b"])),
        )


def constant_kernel(c: float = 1.0) -> KernelModel:
    return KernelModel("constant", scale=c)


def singular_kernel(kappa: float = 1.0) -> KernelModel:
    """Canonical non-cutoff Maxwellian kernel, ``b sin(theta) = kappa theta^(-3/2)``."""
    return KernelModel("maxwellian_singular", scale=kappa)


def eval_b(model: KernelModel, theta):
    """``b(cos theta)`` for ``theta in (0, pi/2]``; raises ``ValueError`` outside that range."""
    th = np.asarray(theta, dtype=float)
    if np.any(~(th > 0.0)) or np.any(th > HALF_PI * (1 + 1e-15)):
        raise ValueError("theta must lie in (0, pi/2]")
    out = model.weight(th) / np.sin(th)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# angular moments

def _bracket_lambda(theta: np.ndarray, alpha: float) -> np.ndarray:
    """``cos^a(theta/2) + sin^a(theta/2) - 1`` without cancellation near 0."""
    s2 = np.sin(0.5 * theta) ** 2
    return s2 ** (0.5 * alpha) + np.expm1(0.5 * alpha * np.log1p(-s2))


_WEIGHTS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "l1": lambda th, a: np.ones_like(th),
    "mu": lambda th, a: np.sin(0.5 * th) ** a,
    "gamma": lambda th, a: np.cos(0.5 * th) ** a + np.sin(0.5 * th) ** a,
    "lambda": _bracket_lambda,
}


def _vanishing_order(kind: str, alpha: float) -> float:
    return alpha if kind in ("mu", "lambda") else 0.0


def angular_integral(model: KernelModel, kind: str, alpha: float = 2.0,
                     order: int = 16, tol: float = MOMENT_TOL) -> QuadResult:
    """Refined quadrature of ``2 pi int b sin(theta) w(theta) dtheta`` for a named weight."""
    return _angular_integral_cached(model, kind, float(alpha), int(order), float(tol))


@lru_cache(maxsize=512)
def _angular_integral_cached(model, kind, alpha, order, tol) -> QuadResult:
    wfun = _WEIGHTS[kind]
    lo = model.lower_angle
    cuts = [lo] + model.breakpoints() + [HALF_PI]
    beta = -model.nu + _vanishing_order(kind, alpha)
    grading = grading_for_exponent(beta)

    def evaluate(panels: int) -> tuple[float, float]:
        total = 0.0
        scale = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            nodes, w = segment_rule(a, b, panels, order, grading)
            f = model.weight(nodes) * wfun(nodes, alpha)
            total += float(np.dot(w, f))
            scale += float(np.dot(w, np.abs(f)))
        return 2 * math.pi * total, 2 * math.pi * scale

    return refine(evaluate, panels0=4, tol=tol)


def l1_norm(model: KernelModel) -> float:
    """``||b||_{L1(S^2)}``; ``inf`` for non-cutoff kernels."""
    return angular_integral(model, "l1").flagged_value


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")


def moment_mu_alpha(model: KernelModel, alpha: float) -> float:
    """``2 pi int b sin(theta) sin^alpha(theta/2)``; ``inf`` when divergent."""
    _check_alpha(alpha)
    return angular_integral(model, "mu", alpha).flagged_value


def moment_gamma_alpha(model: KernelModel, alpha: float) -> float:
    """``2 pi int b sin(theta) [cos^alpha + sin^alpha](theta/2)``; ``inf`` for non-cutoff kernels."""
    _check_alpha(alpha)
    return angular_integral(model, "gamma", alpha).flagged_value


def moment_lambda_alpha(model: KernelModel, alpha: float) -> float:
    """Stability exponent ``2 pi int b sin(theta) [cos^a + sin^a - 1](theta/2)``."""
    _check_alpha(alpha)
    if alpha == 2.0:
        # the bracket vanishes identically
        return 0.0 if math.isfinite(moment_mu_alpha(model, 2.0)) else math.inf
    return angular_integral(model, "lambda", alpha).flagged_value


@dataclass(frozen=True)
class MomentConstants:
    alpha: float
    lambda_alpha: float
    gamma_alpha: float
    mu_alpha: float
    b_l1: float

    @classmethod
    def of(cls, model: KernelModel, alpha: float) -> "MomentConstants":
        return cls(
            alpha=alpha,
            lambda_alpha=moment_lambda_alpha(model, alpha),
            gamma_alpha=moment_gamma_alpha(model, alpha),
            mu_alpha=moment_mu_alpha(model, alpha),
            b_l1=l1_norm(model),
        )

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha", "lambda_alpha", "gamma_alpha", "mu_alpha", "b_l1")}
