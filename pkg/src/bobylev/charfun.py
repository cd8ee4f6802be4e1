"""Isotropic characteristic functions sampled on a radial grid.

A :class:`RadialCharFn` stores ``phi(r_i) - 1`` at the grid nodes (keeping
the deviation avoids cancellation where ``phi`` is close to 1) and evaluates
everywhere on ``[0, r_max]``:

* between nodes, by monotone cubic Hermite interpolation in ``log r``. For
  data with ``0 < phi < 1`` the interpolated quantity is
  ``log(-log phi) - q log r``, which is exactly linear for every
  ``exp(-c r**a)``, so Gaussians and stable laws are reproduced to rounding.
  Because the interpolant never overshoots the data, ``phi`` stays inside
  any envelope ``exp(-k r**q)`` the node values respect. Other data fall
  back to interpolating ``phi`` itself;
* below the first node, by the analytic anchor ``-log phi = c r**a`` (or
  ``1 - phi = c r**a`` in fallback mode) fitted from the three smallest nodes.

Sups over ``r`` (``K^alpha`` norms, the metric ``d_alpha``) are grid
approximations; where the quotient still increases towards ``r = 0`` a
linear extrapolation to the origin is reported as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .quadrature import composite_rule, filon_sine_transform, panel_edges


#: largest |phi| flushed to zero as round-off after the positive prefix
TAIL_NOISE = 1e-12


class OutOfRangeError(ValueError):
    """Evaluation point beyond the grid's ``r_max``."""


class GridMismatchError(ValueError):
    """Two characteristic functions live on different grids."""


class TailError(ValueError):
    """The inversion integral has a non-negligible tail beyond ``r_max``."""

    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


# ---------------------------------------------------------------------------
# grid

class RadialGrid:
    """Strictly increasing positive radii ``r_1 < ... < r_N``."""

    def __init__(self, nodes: Iterable[float]):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a radial grid needs at least two nodes")
        if not nodes[0] > 0.0:
            raise ValueError("grid nodes must be positive")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        self.nodes = nodes

    @classmethod
    def log_spaced(cls, r_min: float = 1e-4, r_max: float = 1e2, n_log: int = 256,
                   n_linear: int = 32, linear_span: float = 10.0) -> "RadialGrid":
        """Log-spaced nodes plus ``n_linear`` uniform nodes on ``[r_min, linear_span * r_min]``."""
        parts = [np.geomspace(r_min, r_max, n_log)]
        if n_linear > 0:
            parts.append(np.linspace(r_min, min(r_max, linear_span * r_min), n_linear))
        return cls(np.unique(np.concatenate(parts)))

    @classmethod
    def default(cls) -> "RadialGrid":
        return cls.log_spaced()

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    def __len__(self) -> int:
        return self.nodes.size

    def __eq__(self, other) -> bool:
        return isinstance(other, RadialGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.tolist()}

    def __repr__(self) -> str:
        return f"RadialGrid(N={len(self)}, r_min={self.r_min:g}, r_max={self.r_max:g})"


# ---------------------------------------------------------------------------
# characteristic function

def _neg_log(values: np.ndarray, dev: np.ndarray) -> np.ndarray:
    """``-log phi`` from whichever of ``phi`` and ``phi - 1`` is accurate."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(values < 0.5, -np.log(values), -np.log1p(dev))


def _prefix_end(values: np.ndarray, dev: np.ndarray) -> int:
    """Index of the last node of the leading run with ``tiny <= phi < 1`` (-1 if none)."""
    good = (values >= np.finfo(float).tiny) & (dev < 0.0)
    return int(np.argmin(good)) - 1 if not np.all(good) else values.size - 1


def _flush_tail(values: np.ndarray, dev: np.ndarray) -> None:
    """Zero a trailing run of round-off (``|phi| <= TAIL_NOISE``) after the positive prefix, in place."""
    last = _prefix_end(values, dev)
    if 2 <= last < values.size - 1 and np.all(np.abs(values[last + 1:]) <= TAIL_NOISE):
        values[last + 1:] = 0.0
        dev[last + 1:] = -1.0


def _fit_exponent(logr: np.ndarray, logy: np.ndarray) -> float:
    slope = np.polyfit(logr, logy, 1)[0] if logr.size >= 2 else 2.0
    return float(np.clip(slope, 1e-3, 2.0))


class RadialCharFn:
    """Isotropic characteristic function ``phi(|xi|)`` on a :class:`RadialGrid`.

    Parameters
    ----------
    grid : RadialGrid
    values : array, optional
        ``phi(r_i)``. Either this or ``deviation`` must be given.
    deviation : array, optional
        ``phi(r_i) - 1``, preferred when known accurately.
    envelope_power : float
        Exponent ``q`` of the envelope ``exp(-k r**q)`` the interpolant must
        respect (use the diffusion index ``p``; ``0`` disables).
    """

    def __init__(self, grid: RadialGrid, values=None, *, deviation=None, envelope_power: float = 0.0):
        if values is None and deviation is None:
            raise ValueError("give values or deviation (or both)")
        if deviation is None:
            deviation = np.asarray(values, dtype=float) - 1.0
        if values is None:
            values = 1.0 + np.asarray(deviation, dtype=float)
        dev = np.array(deviation, dtype=float)
        vals = np.array(values, dtype=float)
        if dev.shape != grid.nodes.shape or vals.shape != grid.nodes.shape:
            raise ValueError("values must match the grid")
        if not (np.all(np.isfinite(dev)) and np.all(np.isfinite(vals))):
            raise ValueError("characteristic function values must be finite")
        if np.any(np.abs(vals - 1.0 - dev) > 1e-12):
            raise ValueError("values and deviation disagree")
        _flush_tail(vals, dev)
        dev.setflags(write=False)
        vals.setflags(write=False)
        self.grid = grid
        self.deviations = dev
        self.values = vals
        self.envelope_power = float(envelope_power)
        self._build()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_callable(cls, grid: RadialGrid, deviation_fn: Callable[[np.ndarray], np.ndarray],
                      envelope_power: float = 0.0,
                      value_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> "RadialCharFn":
        """Sample ``phi - 1`` (and optionally ``phi``, for accuracy where it is tiny)."""
        r = grid.nodes
        vals = None if value_fn is None else value_fn(r)
        return cls(grid, vals, deviation=deviation_fn(r), envelope_power=envelope_power)

    def replaced(self, values=None, deviation=None) -> "RadialCharFn":
        """A new function on the same grid and envelope."""
        return RadialCharFn(self.grid, values, deviation=deviation, envelope_power=self.envelope_power)

    def _build(self) -> None:
        r, d = self.grid.nodes, self.deviations
        logr = np.log(r)
        self._mode = "unit" if np.all(d == 0.0) else "loglog"
        # the log-log model covers the prefix where 0 < phi < 1 followed by a zero tail
        v = self.values
        last = _prefix_end(v, d)
        head = d[: last + 1]
        if self._mode == "loglog" and (last < 2 or np.any(v[last + 1:] != 0.0)):
            self._mode = "direct"
        self._last = last if self._mode == "loglog" else r.size - 1
        self._anchor = (0.0, 2.0)
        if self._mode == "loglog":
            q = self.envelope_power
            y = np.log(_neg_log(self.values[: last + 1], head)) - q * logr[: last + 1]
            self._interp = PchipInterpolator(logr[: last + 1], y, extrapolate=True)
            a = _fit_exponent(logr[:3], y[:3] + q * logr[:3])
            self._anchor = (float(-math.log1p(d[0]) / r[0] ** a), a)
        elif self._mode == "direct":
            self._interp = PchipInterpolator(logr, d, extrapolate=True)
            if np.all(d[:3] < 0.0):
                a = _fit_exponent(logr[:3], np.log(-d[:3]))
            else:
                a = 2.0
            self._anchor = (max(0.0, float(-d[0] / r[0] ** a)), a)

    # -- evaluation -----------------------------------------------------------

    @property
    def near_origin_model(self) -> tuple[float, float]:
        """``(c, a)`` of the anchor used below ``r_min``."""
        return self._anchor

    @property
    def mode(self) -> str:
        return self._mode

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(phi(x), phi(x) - 1)`` for ``0 <= x <= r_max``, each to full relative accuracy."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r_max = self.grid.r_max
        if np.any(x > r_max * (1.0 + 1e-12)) or np.any(x < 0.0):
            raise OutOfRangeError(f"radius outside [0, {r_max:g}]")
        dev = np.zeros(x.shape)
        val = np.ones(x.shape)
        if self._mode == "unit":
            return val, dev
        r = self.grid.nodes
        c, a = self._anchor
        low = x < r[0]
        if self._mode == "loglog":
            mid = ~low & (x <= r[self._last])
            tail = x > r[self._last]
            s = np.empty(x.shape)
            s[low] = c * x[low] ** a
            lx = np.log(x[mid])
            s[mid] = np.exp(np.minimum(self._interp(lx) + self.envelope_power * lx, 700.0))
            keep = ~tail
            dev[keep] = np.expm1(-s[keep])
            val[keep] = np.exp(-s[keep])
            dev[tail] = -1.0
            val[tail] = 0.0
        else:
            dev[low] = -c * x[low] ** a
            dev[~low] = self._interp(np.log(np.clip(x[~low], r[0], r_max)))
            val = 1.0 + dev
        return val, dev

    def deviation(self, x):
        """``phi(x) - 1``."""
        scalar = np.ndim(x) == 0
        dev = self.evaluate(x)[1]
        return float(dev[0]) if scalar else dev

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        val = self.evaluate(x)[0]
        return float(val[0]) if scalar else val

    def __repr__(self) -> str:
        return f"RadialCharFn({self.grid!r}, mode={self._mode})"


# ---------------------------------------------------------------------------
# presets

def stable_charfn(grid: RadialGrid, p: float, t: float = 1.0, envelope_power: float = 0.0) -> RadialCharFn:
    """``W_p(r, t) = exp(-t r**p)`` on the grid."""
    return RadialCharFn.from_callable(grid, lambda r: np.expm1(-t * r**p), envelope_power,
                                      lambda r: np.exp(-t * r**p))


def gaussian_charfn(grid: RadialGrid, c: float = 0.5, envelope_power: float = 0.0) -> RadialCharFn:
    """``exp(-c r**2)``."""
    return stable_charfn(grid, 2.0, c, envelope_power)


def mixture_charfn(grid: RadialGrid, components: Sequence[tuple[float, float, float]],
                   envelope_power: float = 0.0) -> RadialCharFn:
    """Convex mixture ``sum w_k W_{p_k}(., t_k)`` from ``(weight, p, t)`` triples."""
    w = np.array([c[0] for c in components], dtype=float)
    if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=1e-12):
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    dev = lambda r: sum(wk * np.expm1(-tk * r**pk) for wk, pk, tk in components)
    val = lambda r: sum(wk * np.exp(-tk * r**pk) for wk, pk, tk in components)
    return RadialCharFn.from_callable(grid, dev, envelope_power, val)


def unit_charfn(grid: RadialGrid) -> RadialCharFn:
    """The characteristic function of the point mass at 0."""
    return RadialCharFn(grid, deviation=np.zeros(len(grid)))


# ---------------------------------------------------------------------------
# norms and metric

def grid_sup(values) -> float:
    """Plain maximum over grid samples (no extrapolation)."""
    return float(np.max(np.asarray(values, dtype=float)))


def extrapolated_sup(r: np.ndarray, g: np.ndarray) -> float:
    """Max of ``g`` over the grid and, if ``g`` still rises towards 0, its linear extrapolation to ``r = 0``."""
    best = float(np.max(g))
    if g.size >= 2 and g[0] > g[1]:
        # quotient still rising towards 0: extrapolate linearly to the origin
        slope = (g[1] - g[0]) / (r[1] - r[0])
        best = max(best, float(g[0] - slope * r[0]))
    return best


def kalpha_norm(phi: RadialCharFn, alpha: float) -> float:
    """Grid approximation of ``sup_r |phi(r) - 1| / r**alpha``."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    r = phi.grid.nodes
    return extrapolated_sup(r, np.abs(phi.deviations) / r**alpha)


def d_alpha(phi: RadialCharFn, psi: RadialCharFn, alpha: float) -> float:
    """Grid approximation of ``sup_r |phi(r) - psi(r)| / r**alpha``."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if phi.grid != psi.grid:
        raise GridMismatchError("d_alpha needs both functions on the same grid")
    r = phi.grid.nodes
    return extrapolated_sup(r, np.abs(phi.deviations - psi.deviations) / r**alpha)


# ---------------------------------------------------------------------------
# positive definiteness and pointwise inequalities

@dataclass(frozen=True)
class PsdReport:
    min_eigenvalue: float
    tol: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= -self.tol


def psd_check(phi, points, tol: float = 1e-10) -> PsdReport:
    """Minimum eigenvalue of ``[phi(|x_i - x_j|)]`` for up to 64 points.

    ``phi`` is a :class:`RadialCharFn` or any radial callable. This samples a
    necessary condition for positive definiteness; it proves nothing.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be an (n, 3) array")
    if pts.shape[0] > 64:
        raise ValueError("psd_check is limited to 64 points")
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    mat = np.asarray(phi(dist.ravel()), dtype=float).reshape(dist.shape)
    mat = 0.5 * (mat + mat.T)
    return PsdReport(float(np.linalg.eigvalsh(mat)[0]), tol, pts.shape[0])


@dataclass(frozen=True)
class InequalityReport:
    check_name: str
    lhs: float
    rhs: float
    location: tuple
    tol: float = 1e-10

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol

    def as_row(self) -> dict:
        return {"check_name": self.check_name, "location": " ".join(f"{x:.17g}" for x in self.location),
                "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "pass": self.passed}


def check_pointwise_bounds(phi: RadialCharFn, alpha: float, samples: Sequence[tuple[float, float]],
                           tol: float = 1e-10) -> list[InequalityReport]:
    """Pointwise estimates for a ``K^alpha`` member on collinear pairs.

    Each sample ``(x, y)`` stands for ``xi = x e`` and ``eta = y e`` on a common
    axis (signed coordinates), so ``|xi - eta| = |x - y|`` and the midpoint is
    ``|x + y| / 2``. Checks, with ``N = ||phi - 1||_alpha``:

    * ``lipschitz``:  ``|phi(xi) - phi(eta)|^2 <= 2 N |xi - eta|^alpha``
    * ``cross_term``: ``|phi(xi) - phi(eta)| <= N (2 sqrt(|xi|^a |xi-eta|^a) + |xi-eta|^a)``
    * ``midpoint``:   ``|phi(xi) + phi(eta) - 2 phi((xi+eta)/2)| <= 2 N |(xi-eta)/2|^alpha``
    * ``bochner_gap``: ``|phi(xi) - phi(eta)|^2 <= 2 (1 - phi(xi - eta))``
    * ``bochner_product``: ``|phi(xi) phi(eta) - phi(xi+eta)|^2 <= (1 - phi(xi)^2)(1 - phi(eta)^2)``
      (skipped when ``|xi + eta| > r_max``)
    """
    norm = kalpha_norm(phi, alpha)
    out: list[InequalityReport] = []
    r_max = phi.grid.r_max
    for x, y in samples:
        ax, ay, diff, mid, tot = abs(x), abs(y), abs(x - y), 0.5 * abs(x + y), abs(x + y)
        px, py = phi(ax), phi(ay)
        dxy = phi.deviation(ax) - phi.deviation(ay)
        loc = (float(x), float(y))
        out.append(InequalityReport("lipschitz", dxy**2, 2 * norm * diff**alpha, loc, tol))
        out.append(InequalityReport(
            "cross_term", abs(dxy), norm * (2 * math.sqrt(ax**alpha * diff**alpha) + diff**alpha), loc, tol))
        second = phi.deviation(ax) + phi.deviation(ay) - 2 * phi.deviation(mid)
        out.append(InequalityReport("midpoint", abs(second), 2 * norm * (0.5 * diff) ** alpha, loc, tol))
        out.append(InequalityReport("bochner_gap", dxy**2, -2 * phi.deviation(diff), loc, tol))
        if tot <= r_max:
            lhs = (px * py - phi(tot)) ** 2
            rhs = (1 - px**2) * (1 - py**2)
            out.append(InequalityReport("bochner_product", lhs, rhs, loc, tol))
    return out


# ---------------------------------------------------------------------------
# radial inverse Fourier transform

def radial_inverse_fourier(phi: RadialCharFn, v_nodes, tol: float = 1e-8, order: int = 16) -> np.ndarray:
    """Density ``f(v) = 1/(2 pi^2) int_0^{r_max} phi(r) r^2 sinc(r v) dr``.

    The neglected tail is bounded by ``|phi(r_max)| r_max^3 / (2 pi^2)``;
    ``TailError`` is raised when this exceeds ``tol``.
    """
    r_max = phi.grid.r_max
    bound = abs(float(phi(r_max))) * r_max**3 / (2 * math.pi**2)
    if bound > tol:
        raise TailError(f"inversion tail bound {bound:.3e} exceeds {tol:.1e}", bound)
    edges = np.unique(np.concatenate([panel_edges(r_max), phi.grid.nodes]))
    v = np.atleast_1d(np.asarray(v_nodes, dtype=float))
    out = np.empty(v.shape)
    zero = v == 0.0
    if np.any(zero):
        nodes, w = composite_rule(edges, order)
        out[zero] = float(np.dot(w, phi(nodes) * nodes**2)) / (2 * math.pi**2)
    if np.any(~zero):
        g = lambda r: phi(r.ravel()).reshape(r.shape) * r
        out[~zero] = filon_sine_transform(g, edges, v[~zero], order) / (2 * math.pi**2 * v[~zero])
    return out


# ---------------------------------------------------------------------------
# tabular output

def curve_rows(phi: RadialCharFn, label: str = "phi") -> list[dict]:
    return [{"quantity": label, "r": float(r), "value": float(v)} for r, v in zip(phi.grid.nodes, phi.values)]


def inequality_rows(reports: Sequence[InequalityReport]) -> list[dict]:
    return [rep.as_row() for rep in reports]


def local_exponent(phi: RadialCharFn, nodes: int = 3) -> float:
    """Fitted small-``r`` exponent of ``|phi - 1|`` from the smallest nodes."""
    r = phi.grid.nodes[:nodes]
    d = np.abs(phi.deviations[:nodes])
    return float(np.polyfit(np.log(r), np.log(d), 1)[0])
