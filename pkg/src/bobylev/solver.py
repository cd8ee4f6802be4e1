"""Time integration of the isotropic Fourier-side equation

    d/dt phi(r, t) = -delta r**p phi + B(phi)(r),   phi(r, 0) = phi0(r),

together with the experiments built on it.

Stepping uses Lawson exponential schemes in the diffusion integrating factor
``E = exp(-delta r**p dt)``. For cutoff kernels ``B = G - gamma phi`` with
``|G(phi)| <= gamma exp(-delta r**p t)`` whenever ``phi`` obeys the growth
envelope, so ``phi + dt B`` is a convex combination as long as
``gamma dt <= 1`` and both schemes preserve the envelope exactly. Non-cutoff kernels have no finite ``gamma``; there the
frozen loss rate ``l(r) = int b [1 - phi(r sin(theta/2))]`` of the current
state is treated by exponential time differencing inside the diffusion
integrating factor (ETD1, and the Cox-Matthews ETD2 corrector for the Heun
variant), with only ``B + l phi`` explicit. This removes the stiffness
where ``phi`` is small and keeps solutions along which ``B`` vanishes exact.
With ``l = 0`` both updates reduce to the Lawson schemes above. The Picard
solver is an independent discretisation of the full integral form with the
factor ``exp(-(gamma + delta r**p) t)``; it is used only as a validator.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import legendre as L
from scipy.special import gammainc, gammaln

from . import kernels as K
from . import levy
from .charfun import RadialCharFn, RadialGrid, d_alpha, extrapolated_sup, kalpha_norm, psd_check
from .collision import QuadratureSpec, bobylev_isotropic, discrete_l1, gain_deviation, grading_for, loss_rate
from .config import tolerances

SCHEMES = ("exp_euler", "exp_heun", "picard")

#: adaptive step control
GROW_AFTER = 10
GROW_FACTOR = 1.2
MIN_DT = 1e-9


class StepRejected(RuntimeError):
    """A trial step broke the growth envelope; ``margin`` is the excess."""

    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class DivergenceError(RuntimeError):
    """The collision operator returned non-finite values."""


class ContractionError(RuntimeError):
    """Picard sweep distances contracted more slowly than the theoretical factor allows."""


class NonCauchyWarning(UserWarning):
    """Successive continuation differences did not decrease."""


@dataclass(frozen=True)
class SolverConfig:
    p: float
    delta_p: float
    alpha: float
    kernel: K.KernelModel
    grid: RadialGrid = field(default_factory=RadialGrid.default)
    dt: float = 0.01
    scheme: str = "exp_heun"
    T_final: float = 1.0
    truncation_sequence: tuple = ()
    quadrature: QuadratureSpec = QuadratureSpec()
    adaptive: bool = True
    tol: dict = field(default_factory=tolerances, compare=False, hash=False)

    def __post_init__(self):
        if not 0.0 < self.p <= 2.0:
            raise ValueError("p must lie in (0, 2]")
        if self.delta_p < 0.0:
            raise ValueError("delta_p must be nonnegative")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError("alpha must lie in (0, 2]")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.T_final > 0.0:
            raise ValueError("T_final must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "picard" and not self.kernel.is_cutoff:
            raise ValueError("the picard scheme needs a cutoff kernel")
        seq = tuple(int(n) for n in self.truncation_sequence)
        if any(b <= a for a, b in zip(seq[:-1], seq[1:])):
            raise ValueError("truncation_sequence must be increasing")
        object.__setattr__(self, "truncation_sequence", seq)

    @property
    def spec(self) -> QuadratureSpec:
        """Quadrature with the grading fixed from ``alpha`` so the angular rule is the same every step."""
        if self.quadrature.grading is not None:
            return self.quadrature
        return replace(self.quadrature, grading=grading_for(self.kernel, self.alpha))

    @property
    def gamma_h(self) -> float:
        """``||b||_1`` as seen by the angular rule (``inf`` for non-cutoff kernels)."""
        return discrete_l1(self.kernel, self.spec) if self.kernel.is_cutoff else math.inf

    def with_kernel(self, kernel: K.KernelModel) -> "SolverConfig":
        return replace(self, kernel=kernel)

    def dissipation(self, r: np.ndarray) -> np.ndarray:
        return self.delta_p * np.asarray(r, dtype=float) ** self.p


@dataclass
class EvolutionState:
    t: float
    phi: RadialCharFn
    history: list = field(default_factory=list)


@dataclass
class Trajectory:
    times: list
    states: list
    config: SolverConfig
    history: list = field(default_factory=list)
    rejected: int = 0

    @property
    def final(self) -> RadialCharFn:
        return self.states[-1]

    def state_at(self, t: float) -> RadialCharFn:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no output at t = {t}")
        return self.states[i]

    def deviations(self) -> np.ndarray:
        return np.array([s.deviations for s in self.states])

    def rows(self) -> list[dict]:
        r = self.config.grid.nodes
        return [{"t": float(t), "r": float(ri), "phi": float(v)}
                for t, s in zip(self.times, self.states) for ri, v in zip(r, s.values)]


# ---------------------------------------------------------------------------
# stepping

def truncate_to(model: K.KernelModel, n: int, cap: bool = False) -> K.KernelModel:
    """``b_n``; for an already truncated kernel the effective order is the smaller one."""
    if model.truncation is None:
        return model.truncate(n, cap)
    n_eff = min(int(n), model.truncation.n)
    return replace(model, truncation=K.Truncation(n_eff, model.truncation.cap or cap))


def _as_state(phi0: RadialCharFn, config: SolverConfig) -> RadialCharFn:
    if phi0.grid != config.grid:
        raise ValueError("initial datum must live on the configuration grid")
    if phi0.envelope_power == config.p:
        return phi0
    return RadialCharFn(config.grid, phi0.values, deviation=phi0.deviations, envelope_power=config.p)


def _operator(phi: RadialCharFn, config: SolverConfig) -> np.ndarray:
    if config.kernel.scale == 0.0:
        return np.zeros(len(config.grid))
    out = np.asarray(bobylev_isotropic(phi, config.kernel, config.grid.nodes, config.spec), dtype=float)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("collision operator returned non-finite values")
    return out


def growth_margin(phi: RadialCharFn, config: SolverConfig, t: float) -> float:
    """``max_r exp(delta r^p t) |phi(r)| - 1``, computed in log form to avoid overflow."""
    with np.errstate(divide="ignore"):
        expo = np.log(np.abs(phi.values)) + config.dissipation(config.grid.nodes) * t
    return float(np.max(np.expm1(expo)))


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi1 = (e^z - 1)/z`` and ``phi2 = (e^z - 1 - z)/z^2`` for ``z <= 0``, series near 0."""
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    p1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120, em1 / zs)
    p2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120 + z**4 / 720, (em1 - zs) / zs**2)
    return p1, p2


def _accept(state: EvolutionState, config: SolverConfig, new: RadialCharFn, dt: float) -> EvolutionState:
    t_new = state.t + dt
    margin = growth_margin(new, config, t_new)
    if margin > config.tol["growth"]:
        raise StepRejected(f"growth envelope exceeded by {margin:.3e} at t = {t_new:.6g}", margin)
    record = {"t": t_new, "dt": dt, "growth_margin": margin}
    return EvolutionState(t_new, new, state.history + [record])


def step(state: EvolutionState, config: SolverConfig, dt: Optional[float] = None) -> EvolutionState:
    """Advance one step; raises :class:`StepRejected` if the growth envelope is broken."""
    dt = config.dt if dt is None else float(dt)
    if config.scheme not in ("exp_euler", "exp_heun"):
        raise ValueError("step() supports exp_euler and exp_heun; use picard_solve for picard")
    phi = state.phi
    r = config.grid.nodes
    diss = config.dissipation(r)
    e = np.exp(-diss * dt)
    em1 = np.expm1(-diss * dt)
    if config.kernel.is_cutoff:
        loss = np.zeros_like(r)
    else:
        loss = loss_rate(phi, config.kernel, r, config.spec)
    z = -loss * dt
    p1, p2 = _phi_functions(z)
    n0 = _operator(phi, config) + loss * phi.values
    inner = np.expm1(z) * phi.values + dt * p1 * n0
    val = e * (phi.values + inner)
    dev = e * (phi.deviations + inner) + em1
    if config.scheme == "exp_heun":
        pred = phi.replaced(val, dev)
        corr = dt * p2 * (_operator(pred, config) + loss * pred.values - e * n0)
        val, dev = val + corr, dev + corr
    return _accept(state, config, phi.replaced(val, dev), dt)


def _max_dt(config: SolverConfig) -> float:
    dt = config.dt
    if config.kernel.is_cutoff and config.kernel.scale > 0.0:
        dt = min(dt, 1.0 / config.gamma_h)
    return dt


def _output_times(config: SolverConfig, output_times, n_outputs) -> list[float]:
    if output_times is None:
        n = n_outputs or max(1, int(round(config.T_final / config.dt)))
        output_times = np.linspace(0.0, config.T_final, n + 1)[1:]
    out = sorted(float(t) for t in output_times if t > 0.0)
    if not out or out[-1] > config.T_final * (1 + 1e-12):
        raise ValueError("output times must lie in (0, T_final]")
    return out


def evolve(phi0: RadialCharFn, config: SolverConfig, output_times: Optional[Sequence[float]] = None,
           n_outputs: Optional[int] = None) -> Trajectory:
    """Step to ``T_final`` recording the state at ``output_times`` (and at ``t = 0``).

    With ``config.adaptive`` a rejected step is retried with half the step; the
    step grows by 1.2 after 10 clean steps, up to ``config.dt`` and
    ``1 / gamma``. Without it a rejection propagates.
    """
    if config.scheme == "picard":
        raise ValueError("use picard_solve for the picard scheme")
    outs = _output_times(config, output_times, n_outputs)
    state = EvolutionState(0.0, _as_state(phi0, config))
    traj = Trajectory([0.0], [state.phi], config)
    dt_max = _max_dt(config)
    dt_cur = dt_max
    clean = 0
    for target in outs:
        while state.t < target - 1e-12 * max(1.0, target):
            trial = min(dt_cur, target - state.t)
            try:
                new = step(state, config, trial)
            except StepRejected:
                if not config.adaptive:
                    raise
                traj.rejected += 1
                dt_cur = trial / 2
                clean = 0
                if dt_cur < MIN_DT:
                    raise
                continue
            if trial == target - state.t:
                new.t = target
            state = EvolutionState(new.t, new.phi)
            traj.history.append(new.history[-1])
            clean += 1
            if config.adaptive and clean >= GROW_AFTER:
                dt_cur = min(dt_cur * GROW_FACTOR, dt_max)
                clean = 0
        traj.times.append(target)
        traj.states.append(state.phi)
    return traj


# ---------------------------------------------------------------------------
# Picard validator

@dataclass
class PicardResult:
    trajectory: Trajectory
    distances: list
    ratios: list
    bound: float
    T0: float

    @property
    def sweeps(self) -> int:
        return len(self.distances)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0


def lobatto_nodes(q: int) -> np.ndarray:
    """Gauss-Lobatto nodes on ``[0, 1]``."""
    inner = L.Legendre.basis(q - 1).deriv().roots()
    return 0.5 * (np.concatenate([[-1.0], np.sort(inner.real), [1.0]]) + 1.0)


def _exp_moments(z: np.ndarray, s: float, kmax: int) -> np.ndarray:
    """``M_k(z) = int_0^s w^k exp(-z w) dw`` for ``k = 0..kmax``, shape ``(kmax+1, len(z))``."""
    out = np.empty((kmax + 1, z.size))
    small = z * s < 1.0
    terms = 40
    for k in range(kmax + 1):
        zs = z[small]
        acc = np.zeros(zs.shape)
        coef = s ** (k + 1)
        for j in range(terms):
            acc += coef / (k + j + 1)
            coef = coef * (-zs * s) / (j + 1)
        out[k, small] = acc
        zl = z[~small]
        out[k, ~small] = np.exp(gammaln(k + 1) - (k + 1) * np.log(zl)) * gammainc(k + 1, zl * s)
    return out


def _picard_weights(rate: np.ndarray, h: float, y: np.ndarray) -> np.ndarray:
    """``W[n, j, i] = int_0^{y_j h} exp(-rate_n (y_j h - s)) l_i(s / h) ds``."""
    q = y.size
    basis = []
    for i in range(q):
        others = np.delete(y, i)
        basis.append(Polynomial.fromroots(others) / np.prod(y[i] - others))
    z = rate * h
    out = np.zeros((rate.size, q, q))
    for j in range(q):
        if y[j] == 0.0:
            continue
        moments = _exp_moments(z, y[j], q - 1)
        shift = Polynomial([y[j], -1.0])
        for i in range(q):
            c = basis[i](shift).coef
            c = np.pad(c, (0, q - c.size))
            out[:, j, i] = h * (c @ moments)
    return out


def picard_solve(phi0: RadialCharFn, config: SolverConfig, T0: Optional[float] = None, windows: int = 1,
                 panels: int = 8, order: int = 5, max_sweeps: int = 100) -> PicardResult:
    """Fixed point of ``A(phi)(t) = e^{-Lt} phi0 + int_0^t e^{-L(t-s)} G(phi(s)) ds``, ``L = gamma + delta r^p``.

    The window ``[0, T0]`` is split into ``panels`` pieces with ``order``
    Gauss-Lobatto nodes each; ``G`` is interpolated on them and the
    exponential convolution is integrated exactly. Sweeps stop when the
    ``K^alpha`` distance between iterates, maximised over time nodes, drops
    below ``tol["picard"]``. Further windows restart from the last state.
    """
    model = config.kernel
    if not model.is_cutoff:
        raise ValueError("picard_solve needs a cutoff kernel")
    gamma2 = K.l1_norm(model)
    limit = math.log(2.0) / gamma2 if gamma2 > 0 else math.inf
    if T0 is None:
        T0 = 0.9 * limit if math.isfinite(limit) else config.T_final
    if not 0.0 < T0 < limit:
        raise ValueError(f"T0 must lie in (0, ln 2 / gamma_2) = (0, {limit:.6g})")
    tol = config.tol
    bound = 2.0 * (1.0 - math.exp(-gamma2 * T0))
    spec = config.spec
    gamma_h = discrete_l1(model, spec) if model.scale > 0 else 0.0
    r = config.grid.nodes
    diss = config.dissipation(r)
    rate = gamma_h + diss
    h = T0 / panels
    y = lobatto_nodes(order)
    W = _picard_weights(rate, h, y)
    decay = np.exp(-np.outer(y * h, rate))
    decay_m1 = np.expm1(-np.outer(y * h, rate))
    with np.errstate(divide="ignore", invalid="ignore"):
        d_over_l = np.where(rate > 0, diss / rate, 0.0)
        g_over_l = np.where(rate > 0, gamma_h / rate, 0.0)
    ra = r ** config.alpha
    n_nodes = panels * (order - 1) + 1
    local_t = np.concatenate([k * h + h * y[:-1] for k in range(panels)] + [[T0]])

    start = _as_state(phi0, config)
    traj = Trajectory([0.0], [start], config)
    distances: list[float] = []
    ratios: list[float] = []
    for w in range(windows):
        vals = np.tile(start.values, (n_nodes, 1))
        devs = np.tile(start.deviations, (n_nodes, 1))
        prev = None
        for _ in range(max_sweeps):
            g = np.empty_like(devs)
            for m in range(n_nodes):
                if model.scale == 0.0:
                    g[m] = 0.0
                else:
                    g[m] = gain_deviation(start.replaced(vals[m], devs[m]), model, r, spec)
            new_v = np.empty_like(vals)
            new_d = np.empty_like(devs)
            new_v[0], new_d[0] = start.values, start.deviations
            for k in range(panels):
                a = k * (order - 1)
                gk = g[a:a + order]
                for j in range(1, order):
                    conv = np.einsum("ni,in->n", W[:, j, :], gk)
                    new_v[a + j] = decay[j] * new_v[a] - decay_m1[j] * g_over_l + conv
                    new_d[a + j] = decay[j] * new_d[a] + decay_m1[j] * d_over_l + conv
            rho = max(extrapolated_sup(r, np.abs(new_d[m] - devs[m]) / ra) for m in range(n_nodes))
            if prev is not None and prev > 1e3 * np.finfo(float).eps:
                ratio = rho / prev
                ratios.append(ratio)
                if ratio > bound * (1.0 + tol["contraction_slack"]):
                    raise ContractionError(f"sweep ratio {ratio:.4f} exceeds contraction factor {bound:.4f}")
            distances.append(rho)
            prev = rho
            vals, devs = new_v, new_d
            if rho < tol["picard"]:
                break
        else:
            raise ContractionError(f"no convergence after {max_sweeps} sweeps (distance {distances[-1]:.3e})")
        for m in range(1, n_nodes):
            traj.times.append(w * T0 + float(local_t[m]))
            traj.states.append(start.replaced(vals[m], devs[m]))
        start = traj.states[-1]
    return PicardResult(traj, distances, ratios, bound, T0)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ContinuationResult:
    truncations: list
    trajectories: list
    differences: list
    exponents: list
    lambda_alpha: float
    limit: Optional[np.ndarray]
    direct: Optional[Trajectory] = None
    direct_gap: Optional[list] = None

    @property
    def cauchy(self) -> bool:
        d = self.differences
        return all(b < a for a, b in zip(d[:-1], d[1:])) or all(x == 0.0 for x in d)

    @property
    def ratios(self) -> list:
        d = self.differences
        return [a / b if b > 0 else math.inf for a, b in zip(d[:-1], d[1:])]

    def rows(self) -> list[dict]:
        out = []
        for k, n in enumerate(self.truncations):
            row = {"n": n, "exponent": self.exponents[k], "lambda_alpha": self.lambda_alpha}
            row["difference_to_next"] = self.differences[k] if k < len(self.differences) else ""
            out.append(row)
        return out


def _run_all(jobs, workers: int):
    if workers <= 1:
        return [f() for f in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda f: f(), jobs))


def cutoff_continuation(phi0: RadialCharFn, config: SolverConfig, output_times: Optional[Sequence[float]] = None,
                        direct: bool = False, workers: int = 1) -> ContinuationResult:
    """Solve with ``b_n`` for each ``n`` in ``config.truncation_sequence`` and tabulate the Cauchy differences.

    The limit is the last member corrected by geometric extrapolation of the
    last two differences. With ``direct`` the base kernel is also stepped
    without truncation and the sup gap to the limit is reported per output.
    """
    seq = list(config.truncation_sequence)
    if len(seq) < 2:
        raise ValueError("continuation needs at least two truncation orders")
    base = config.kernel
    members = [config.with_kernel(truncate_to(base, n)) for n in seq]
    jobs = [lambda c=c: evolve(phi0, c, output_times) for c in members]
    if direct:
        jobs.append(lambda: evolve(phi0, config, output_times))
    runs = _run_all(jobs, workers)
    trajs = runs[: len(seq)]
    devs = [t.deviations() for t in trajs]
    diffs = [float(np.max(np.abs(b - a))) for a, b in zip(devs[:-1], devs[1:])]
    if not all(b < a for a, b in zip(diffs[:-1], diffs[1:])) and any(diffs):
        warnings.warn(f"continuation differences do not decrease: {diffs}", NonCauchyWarning, stacklevel=2)
    alpha = config.alpha
    exps = [K.moment_gamma_alpha(c.kernel, alpha) - K.l1_norm(c.kernel) for c in members]
    limit = devs[-1]
    if len(devs) >= 3 and diffs[-2] > 0:
        q = diffs[-1] / diffs[-2]
        if q < 1.0:
            limit = devs[-1] + (devs[-1] - devs[-2]) * q / (1.0 - q)
    result = ContinuationResult(seq, trajs, diffs, exps, K.moment_lambda_alpha(base, alpha), limit)
    if direct:
        result.direct = runs[-1]
        result.direct_gap = [float(np.max(np.abs(d - l))) for d, l in zip(result.direct.deviations(), limit)]
    return result


@dataclass
class StabilityResult:
    times: list
    lhs: list
    rhs: list
    lambda_alpha: float
    d0: float
    rel_tol: float

    @property
    def passed(self) -> bool:
        return all(a <= b * (1.0 + self.rel_tol) for a, b in zip(self.lhs, self.rhs))

    def rows(self) -> list[dict]:
        return [{"t": t, "lhs": a, "rhs": b, "pass": a <= b * (1.0 + self.rel_tol)}
                for t, a, b in zip(self.times, self.lhs, self.rhs)]


def pointwise_gap(phi: RadialCharFn, psi: RadialCharFn) -> np.ndarray:
    """``|phi - psi|`` at the nodes, from values where both are small and from deviations elsewhere."""
    small = (np.abs(phi.values) < 0.5) & (np.abs(psi.values) < 0.5)
    return np.where(small, np.abs(phi.values - psi.values), np.abs(phi.deviations - psi.deviations))


def weighted_distance(phi: RadialCharFn, psi: RadialCharFn, config: SolverConfig, t: float) -> float:
    """``sup_r exp(delta r^p t) |phi - psi| / r^alpha``."""
    r = config.grid.nodes
    diff = pointwise_gap(phi, psi)
    with np.errstate(divide="ignore"):
        g = np.exp(np.log(diff) + config.dissipation(r) * t - config.alpha * np.log(r))
    return extrapolated_sup(r, g)


def stability_experiment(phi0: RadialCharFn, psi0: RadialCharFn, config: SolverConfig,
                         output_times: Optional[Sequence[float]] = None, workers: int = 1) -> StabilityResult:
    """Evolve both data and compare the weighted distance with ``exp(lambda_alpha t) d_alpha(phi0, psi0)``."""
    runs = _run_all([lambda: evolve(phi0, config, output_times), lambda: evolve(psi0, config, output_times)],
                    workers)
    lam = K.moment_lambda_alpha(config.kernel, config.alpha)
    d0 = d_alpha(runs[0].states[0], runs[1].states[0], config.alpha)
    times = runs[0].times
    lhs = [weighted_distance(a, b, config, t) for t, a, b in zip(times, runs[0].states, runs[1].states)]
    rhs = [math.exp(lam * t) * d0 for t in times]
    return StabilityResult(list(times), lhs, rhs, lam, d0, config.tol["stability_rel"])


@dataclass
class ProbeResult:
    p: float
    alpha: float
    r_min: list
    sups: list
    slope: float

    @property
    def expected_slope(self) -> float:
        return -(self.alpha - self.p) if self.alpha > self.p else 0.0

    def rows(self) -> list[dict]:
        return [{"r_min": a, "sup": b} for a, b in zip(self.r_min, self.sups)]


def nonexistence_probe(p: float, alpha: float, delta_p: float, t: float,
                       r_min_sequence: Sequence[float], r_max: float = 1e2, fit_last: int = 3) -> ProbeResult:
    """Grid sups of ``(1 - exp(-delta r^p t)) / r^alpha`` over ``r >= r_min`` and their log-log slope."""
    if delta_p <= 0.0:
        raise ValueError("delta_p must be positive")
    r_mins = sorted((float(x) for x in r_min_sequence), reverse=True)
    sups = [levy.envelope_gap_sup(p, alpha, t, rm, delta_p, r_max) for rm in r_mins]
    slope = levy.loglog_slope(r_mins, sups, last=min(fit_last, len(r_mins)))
    return ProbeResult(p, alpha, r_mins, sups, slope)


@dataclass
class DiagnosticsReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(row["pass"] for row in self.rows)

    def failures(self) -> list[dict]:
        return [row for row in self.rows if not row["pass"]]

    def select(self, check: str) -> list[dict]:
        return [row for row in self.rows if row["check"] == check]


def _row(check, t, s, lhs, rhs, passed) -> dict:
    return {"check": check, "t": float(t), "s": float(s), "lhs": float(lhs), "rhs": float(rhs),
            "margin": float(rhs - lhs), "pass": bool(passed)}


def diagnostics(trajectory: Trajectory, seed: int = 0, n_pairs: int = 50, psd_sets: int = 8,
                psd_points: int = 12) -> DiagnosticsReport:
    """Growth margin, norm envelope, time modulus and psd spot checks along a trajectory."""
    config = trajectory.config
    tol = config.tol
    alpha, p, delta = config.alpha, config.p, config.delta_p
    r = config.grid.nodes
    mu = K.moment_mu_alpha(config.kernel, alpha) if config.kernel.scale > 0 else 0.0
    times = np.asarray(trajectory.times)
    states = trajectory.states
    T = float(times[-1])
    n0 = kalpha_norm(states[0], alpha)
    rows = []
    for t, phi in zip(times, states):
        margin = growth_margin(phi, config, t)
        rows.append(_row("growth", t, t, margin, 0.0, margin <= tol["growth"]))
    for t, phi in zip(times, states):
        norm = kalpha_norm(phi, alpha)
        env = math.exp(5 * mu * t) * (n0 + (delta * t) ** (alpha / p))
        rows.append(_row("envelope", t, t, norm, env, norm <= env * (1 + tol["inequality"]) + tol["inequality"]))
    rng = np.random.default_rng(seed)
    if len(times) >= 2:
        c_t = 10 * mu * math.exp(5 * mu * T) * (n0 + (delta * T) ** (alpha / p))
        const = delta ** (alpha / p) + c_t * T ** (1 - alpha / p)
        for _ in range(n_pairs):
            i, j = sorted(rng.choice(len(times), size=2, replace=False))
            diff = np.abs(states[j].deviations - states[i].deviations) / r**alpha
            lhs = extrapolated_sup(r, diff)
            rhs = abs(times[j] - times[i]) ** (alpha / p) * const
            rows.append(_row("time_modulus", times[j], times[i], lhs, rhs,
                             lhs <= rhs * (1 + tol["inequality"]) + tol["inequality"]))
    for _ in range(psd_sets):
        k = int(rng.integers(len(times)))
        pts = rng.normal(size=(psd_points, 3)) * 10 ** rng.uniform(-1.0, 0.5)
        span = np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))
        if span > config.grid.r_max:
            pts *= config.grid.r_max / span
        rep = psd_check(states[k], pts, tol["psd"])
        rows.append(_row("psd", times[k], times[k], -rep.min_eigenvalue, tol["psd"], rep.passed))
    return DiagnosticsReport(rows)
