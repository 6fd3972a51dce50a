"""Nonlinear mild-solution machinery.

The state equation couples a memory-damped diffusion with a reaction term
built from the state v and its running history w = (ell * v):

    u(t) = S(t) xi + int_0^t S(t - tau) f(u(tau), w(tau)) dtau

Fixed-point iteration on that formula converges geometrically whenever the
data are small enough; ``small_data_gate`` and ``spectral_gap_gate`` evaluate
the sufficient conditions and ``holder_estimate`` measures time regularity
of a computed trajectory.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import beta as beta_fn

from .grids import TimeGrid
from .kernels import HistoryKernel
from .resolvent import ResolventContext, convolve_sol_op
from .spectral import SpectralBasis, SpectralField, hnorm, project
from .volterra import lag_weights, product_convolve

__all__ = [
    "Nonlinearity",
    "OverflowDiagnostic",
    "NonConvergence",
    "history_series",
    "history_apply",
    "PicardOptions",
    "MildSolution",
    "picard_solve",
    "GateDecision",
    "small_data_gate",
    "spectral_gap_gate",
    "select_invariant_radius",
    "HolderReport",
    "holder_estimate",
]


class OverflowDiagnostic(RuntimeError):
    """Pointwise evaluation produced a non-finite sample."""


class NonConvergence(RuntimeError):
    """Fixed-point iteration hit the cap; carries the residual history."""

    def __init__(self, message: str, residuals: Tuple[float, ...]):
        super().__init__(message)
        self.residuals = residuals


def _check_finite(samples: np.ndarray, basis: SpectralBasis, what: str) -> None:
    if np.all(np.isfinite(samples)):
        return
    flat = np.argwhere(~np.isfinite(np.atleast_2d(samples)))
    i, j = flat[0]
    node = basis.nodes[j] if basis.nodes.ndim == 1 else tuple(basis.nodes[j])
    raise OverflowDiagnostic(
        f"{what} produced a non-finite sample at node {node} (time row {i})"
    )


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term f(v, w) acting on coefficient series.

    kind is one of zero | linear_diagonal | power | advection | sum | custom;
    use the factory classmethods rather than the constructor.  mu is the
    regularity order of the state, delta the time-integrability exponent of
    the damping estimate; theta (the dual output order, reported alongside
    field norms) defaults to 1 + delta - mu.  weak_mode marks specs whose
    convolution estimate targets the weaker dual order 2 - mu, which needs
    an integrable reciprocal cumulative kernel; the flag only affects which
    verification rows apply, never the iteration itself.
    """

    kind: str
    mu: float = 1.0
    delta: float = 0.5
    theta: Optional[float] = None
    weak_mode: bool = False
    coeffs: Optional[np.ndarray] = None
    power: float = 2.0
    scale: float = 1.0
    signed: bool = True
    chi: Tuple[float, ...] = ()
    parts: Tuple["Nonlinearity", ...] = ()
    series_fn: Optional[Callable] = None
    lip_state: Optional[Callable[[float], float]] = None
    lip_history: Optional[Callable[[float], float]] = None
    state_global: Optional[float] = None
    history_global: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.mu < 2.0:
            raise ValueError("mu must lie in (0, 2)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.theta is None:
            object.__setattr__(self, "theta", 1.0 + self.delta - self.mu)
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")

    # -- factories ---------------------------------------------------------

    @classmethod
    def zero(cls, **kw) -> "Nonlinearity":
        return cls(kind="zero", state_global=0.0, history_global=0.0, **kw)

    @classmethod
    def linear_diagonal(cls, coeffs, **kw) -> "Nonlinearity":
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError("per-mode coefficients must be 1-d")
        return cls(kind="linear_diagonal", coeffs=c, history_global=0.0, **kw)

    @classmethod
    def polynomial_power(cls, power: float, scale: float = 1.0, signed: bool = True, **kw):
        if power <= 1.0:
            raise ValueError("power must exceed 1")
        return cls(
            kind="power",
            power=float(power),
            scale=float(scale),
            signed=signed,
            history_global=0.0,
            **kw,
        )

    @classmethod
    def advection_history(cls, chi, **kw) -> "Nonlinearity":
        chi_t = tuple(float(c) for c in np.atleast_1d(chi))
        amp = float(np.linalg.norm(chi_t))
        return cls(
            kind="advection",
            chi=chi_t,
            state_global=0.0,
            history_global=amp,
            **kw,
        )

    @classmethod
    def sum_of(cls, *parts: "Nonlinearity", **kw) -> "Nonlinearity":
        if not parts:
            raise ValueError("sum needs at least one part")
        kw.setdefault("mu", parts[0].mu)
        kw.setdefault("delta", parts[0].delta)
        sg = [p.state_global for p in parts]
        hg = [p.history_global for p in parts]
        return cls(
            kind="sum",
            parts=tuple(parts),
            state_global=None if any(v is None for v in sg) else float(np.sum(sg)),
            history_global=None if any(v is None for v in hg) else float(np.sum(hg)),
            **kw,
        )

    @classmethod
    def custom(cls, fn: Callable, **kw) -> "Nonlinearity":
        """fn maps (v: SpectralField, w: SpectralField) -> SpectralField."""
        return cls(kind="custom", series_fn=fn, **kw)

    @classmethod
    def custom_series(cls, fn: Callable, **kw) -> "Nonlinearity":
        """fn maps coefficient arrays (V, W, basis) -> array, vectorized in t."""
        spec = cls(kind="custom", series_fn=fn, **kw)
        object.__setattr__(spec, "_vectorized", True)
        return spec

    # -- evaluation ---------------------------------------------------------

    def apply_series(self, V: np.ndarray, W: np.ndarray, basis: SpectralBasis) -> np.ndarray:
        """f(v, w) rows for coefficient series V, W of shape (rows, n_modes)."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if V.shape[1] != basis.n_modes or W.shape != V.shape:
            raise ValueError("series shapes do not match the basis")
        if self.kind == "zero":
            return np.zeros_like(V)
        if self.kind == "linear_diagonal":
            if self.coeffs.size != basis.n_modes:
                raise ValueError("diagonal coefficient count does not match basis")
            return V * self.coeffs[None, :]
        if self.kind == "power":
            samples = V @ basis.synthesis.T
            # overflow surfaces through the finiteness check below, not as
            # a stray warning
            with np.errstate(over="ignore"):
                if self.signed:
                    mapped = np.sign(samples) * np.abs(samples) ** self.power
                else:
                    mapped = np.abs(samples) ** self.power
            mapped *= self.scale
            _check_finite(mapped, basis, f"pointwise power {self.power}")
            return project(basis, mapped)
        if self.kind == "advection":
            grads = basis.gradients
            if len(self.chi) != len(grads):
                raise ValueError("advection vector length does not match domain")
            samples = np.zeros((W.shape[0], basis.nodes.shape[0]))
            for c, g in zip(self.chi, grads):
                if c != 0.0:
                    samples += c * (W @ g.T)
            _check_finite(samples, basis, "advected history")
            return project(basis, samples)
        if self.kind == "sum":
            out = np.zeros_like(V)
            for p in self.parts:
                out += p.apply_series(V, W, basis)
            return out
        if self.kind == "custom":
            if getattr(self, "_vectorized", False):
                out = np.asarray(self.series_fn(V, W, basis), dtype=float)
                if out.shape != V.shape:
                    raise ValueError("custom series callback returned a bad shape")
                _check_finite(out, basis, "custom reaction")
                return out
            rows = []
            for i in range(V.shape[0]):
                fv = self.series_fn(
                    SpectralField(basis, V[i]), SpectralField(basis, W[i])
                )
                rows.append(np.asarray(fv.coeffs, dtype=float))
            out = np.stack(rows, axis=0)
            _check_finite(out, basis, "custom reaction")
            return out
        raise ValueError(f"unknown nonlinearity kind {self.kind!r}")

    def __call__(self, v: SpectralField, w: SpectralField) -> SpectralField:
        out = self.apply_series(v.coeffs[None, :], w.coeffs[None, :], v.basis)
        return SpectralField(v.basis, out[0])

    # -- Lipschitz data ------------------------------------------------------

    def lipschitz_curves(self, basis: SpectralBasis):
        """(L(rho), K(rho')) curves on invariant balls of the given basis.

        Built-in kinds get conservative truncated-basis constants; custom
        specs must supply lip_state / lip_history.  The curves bound the
        increment of f in L2 against state increments in the mu norm and
        history increments in the same norm.
        """
        if self.lip_state is not None or self.lip_history is not None:
            L = self.lip_state or (lambda rho: 0.0)
            K = self.lip_history or (lambda rho: 0.0)
            return L, K
        lam = basis.eigenvalues
        if self.kind == "zero":
            return (lambda rho: 0.0), (lambda rho: 0.0)
        if self.kind == "linear_diagonal":
            lstar = float(np.max(np.abs(self.coeffs) * lam ** (-self.mu / 2.0)))
            return (lambda rho: lstar), (lambda rho: 0.0)
        if self.kind == "power":
            # |u|_inf <= sup|e_n| * sqrt(sum lam^-mu) * |u|_mu on the truncation
            sup_e = float(np.max(np.abs(basis.synthesis)))
            c_inf = sup_e * float(np.sqrt(np.sum(lam ** (-self.mu))))
            c_l2 = float(lam[0] ** (-self.mu / 2.0))
            p, s = self.power, abs(self.scale)

            def L(rho: float) -> float:
                return s * p * (c_inf * rho) ** (p - 1.0) * c_l2

            return L, (lambda rho: 0.0)
        if self.kind == "advection":
            amp = float(np.linalg.norm(self.chi))
            # gradient costs one half power of the spectrum; mu >= 1 absorbs it
            kstar = amp * float(np.max(lam ** ((1.0 - self.mu) / 2.0)))
            return (lambda rho: 0.0), (lambda rho: kstar)
        if self.kind == "sum":
            curves = [p.lipschitz_curves(basis) for p in self.parts]

            def L(rho: float) -> float:
                return float(sum(c[0](rho) for c in curves))

            def K(rho: float) -> float:
                return float(sum(c[1](rho) for c in curves))

            return L, K
        raise ValueError(
            "custom nonlinearity needs explicit lip_state / lip_history curves"
        )


# -- history operator --------------------------------------------------------


def history_series(ell: HistoryKernel, series: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """(ell * series)(t_i) rows by product integration with exact moments."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] != grid.nodes.size:
        raise ValueError("series rows do not match the grid")
    if ell.kind == "zero":
        return np.zeros_like(series)
    if grid.is_uniform:
        return product_convolve(lag_weights(ell.moments, grid), series)
    t = grid.nodes
    steps = grid.steps()
    out = np.zeros_like(series)
    for i in range(1, t.size):
        hi = t[i] - t[:i]
        lo = t[i] - t[1 : i + 1]
        m0, m1 = ell.moments(lo, hi)
        left = (m1 - lo * m0) / steps[:i]
        right = (hi * m0 - m1) / steps[:i]
        out[i] = left @ series[:i] + right @ series[1 : i + 1]
    return out


def history_apply(
    ell: HistoryKernel, series: np.ndarray, grid: TimeGrid, i: int
) -> np.ndarray:
    """History coefficients at node i; series must reach that node."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] <= i:
        raise IndexError("state series does not reach the requested node")
    sub = TimeGrid(grid.nodes[: i + 1], kind=grid.kind, grading=grid.grading) if i >= 2 else None
    if i == 0:
        return np.zeros(series.shape[1:])
    if i == 1:
        # single cell: exact moments against the linear interpolant
        m0, m1 = ell.moments(np.array([0.0]), np.array([grid.nodes[1]]))
        h = grid.nodes[1]
        left = float(m1[0]) / h
        right = float(h * m0[0] - m1[0]) / h
        return left * series[0] + right * series[1]
    return history_series(ell, series[: i + 1], sub)[i]


# -- fixed-point solver -------------------------------------------------------


@dataclass(frozen=True)
class PicardOptions:
    tol: float = 1e-10
    max_iter: int = 200
    beta: float = 0.0
    forcing: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")


@dataclass(frozen=True)
class MildSolution:
    grid: TimeGrid
    basis: SpectralBasis
    coeffs: np.ndarray
    iterations: int
    residuals: Tuple[float, ...]
    mu: float
    beta: float
    converged: bool

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.basis, self.coeffs[i])

    def norms(self, rho: float) -> np.ndarray:
        return hnorm(self.coeffs, self.basis, rho)


def picard_solve(
    ctx: ResolventContext,
    spec: Nonlinearity,
    ell: HistoryKernel,
    xi: np.ndarray,
    opts: PicardOptions = PicardOptions(),
) -> MildSolution:
    """Iterate u <- S xi + S * (f(u, ell * u) + forcing) to a fixed point.

    The residual metric is sup_i exp(-beta t_i) |u_new - u_old|_mu; beta = 0
    is the plain sup norm.  Raises NonConvergence with the residual history
    when the cap is hit.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (ctx.basis.n_modes,):
        raise ValueError("initial coefficients do not match the basis")
    if not np.all(np.isfinite(xi)):
        raise ValueError("initial coefficients must be finite")
    grid, basis = ctx.grid, ctx.basis
    t = grid.nodes
    damp = np.exp(-opts.beta * t)
    head = ctx.table.omega * xi[None, :]
    forcing = opts.forcing
    if forcing is not None:
        forcing = np.asarray(forcing, dtype=float)
        if forcing.shape != head.shape:
            raise ValueError("forcing series shape does not match grid x modes")

    u = head
    residuals = []
    for _ in range(opts.max_iter):
        w = history_series(ell, u, grid)
        f_rows = spec.apply_series(u, w, basis)
        if forcing is not None:
            f_rows = f_rows + forcing
        u_new = head + convolve_sol_op(ctx, f_rows)
        res = float(np.max(damp * hnorm(u_new - u, basis, spec.mu)))
        residuals.append(res)
        u = u_new
        if res < opts.tol:
            return MildSolution(
                grid, basis, u, len(residuals), tuple(residuals), spec.mu,
                opts.beta, True,
            )
    raise NonConvergence(
        f"no fixed point after {opts.max_iter} sweeps "
        f"(last residual {residuals[-1]:.3e})",
        tuple(residuals),
    )


# -- solvability gates --------------------------------------------------------


@dataclass(frozen=True)
class GateDecision:
    name: str
    value: float
    threshold: float
    passed: bool

    def __str__(self) -> str:
        rel = "<" if self.passed else ">="
        return f"{self.name}: {self.value:.6g} {rel} {self.threshold:.6g}"


def small_data_gate(
    state_global: float,
    history_global: float,
    ell_l1: float,
    horizon: float,
    delta: float,
) -> GateDecision:
    """Short-horizon contraction condition on global Lipschitz data."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    value = (
        8.0
        * horizon ** (1.0 - delta)
        / (1.0 - delta)
        * (state_global**2 + history_global**2 * ell_l1**2)
    )
    return GateDecision("small_data_gate", float(value), 1.0, bool(value < 1.0))


def spectral_gap_gate(
    state_global: float,
    history_global: float,
    ell_l1: float,
    lambda1: float,
) -> GateDecision:
    """Arbitrary-horizon condition: Lipschitz data below the spectral gap."""
    if lambda1 <= 0.0:
        raise ValueError("lambda1 must be positive")
    value = 4.0 * (state_global**2 + history_global**2 * ell_l1**2)
    return GateDecision("spectral_gap_gate", float(value), float(lambda1), bool(value < lambda1))


def select_invariant_radius(
    spec: Nonlinearity,
    basis: SpectralBasis,
    xi_norm: float,
    ell_l1: float,
    horizon: float,
    max_doublings: int = 60,
) -> float:
    """Smallest radius 2^k * 2|xi| whose local constants satisfy the gate.

    The ball of this radius is invariant for the fixed-point map and the
    initial datum sits in its lower half.  Raises when the scan fails, which
    means the local Lipschitz growth outruns the short-horizon damping.
    """
    if xi_norm <= 0.0:
        raise ValueError("xi_norm must be positive")
    L, K = spec.lipschitz_curves(basis)
    coef = 8.0 * horizon ** (1.0 - spec.delta) / (1.0 - spec.delta)
    rho = 2.0 * xi_norm
    for _ in range(max_doublings):
        value = coef * (L(rho) ** 2 + K(rho * ell_l1) ** 2 * ell_l1**2)
        if value <= 1.0:
            return rho
        rho *= 2.0
    raise ValueError(
        "no invariant radius found: local Lipschitz constants exceed the "
        f"short-horizon budget for every radius up to {rho:.3e}; shrink the "
        "horizon or the data"
    )


# -- time-regularity estimate ---------------------------------------------


@dataclass(frozen=True)
class HolderReport:
    gamma: float
    mu: float
    t_min: float
    seminorm: float
    t_at: float
    h_at: float
    ell_star1: float
    ell_star2: float
    gate_value: Optional[float]
    gate_passed: Optional[bool]
    gamma_in_range: bool


def _history_weighted_sup(ell: HistoryKernel, grid: TimeGrid, gamma: float, i_min: int) -> float:
    """sup over nodes of t^gamma int_0^t |ell(tau)| (t-tau)^(-gamma) dtau."""
    if ell.kind == "zero":
        return 0.0
    t = grid.nodes
    if ell.kind == "powerlaw":
        # |A| t^(q+1) B(q+1, 1-gamma): increasing, so the horizon wins
        q = ell.exponent
        return float(
            abs(ell.amplitude) * t[-1] ** (q + 1.0) * beta_fn(q + 1.0, 1.0 - gamma)
        )
    sing = HistoryKernel.powerlaw(1.0, -gamma)
    w = lag_weights(sing.moments, grid)
    abs_ell = np.abs(np.asarray(ell(t), dtype=float))
    conv = product_convolve(w, abs_ell)
    vals = t[i_min:] ** gamma * conv[i_min:]
    return float(np.max(vals))


def holder_estimate(
    sol: MildSolution,
    gamma: float,
    mu: Optional[float] = None,
    t_min: Optional[float] = None,
    ell: Optional[HistoryKernel] = None,
    state_global: Optional[float] = None,
    history_global: Optional[float] = None,
    delta: Optional[float] = None,
) -> HolderReport:
    """Weighted Holder seminorm of a trajectory over dyadic increments.

    seminorm = sup (t/h)^gamma |u(t+h) - u(t)|_mu over grid nodes t >= t_min
    and h in {T/2, T/4, ..., dt}.  When the history kernel and global
    constants are supplied, the singular-weight gate value
    16 B(1-delta, 1-2*gamma) T^(1-delta) (L^2 + K^2 ell2^2) is evaluated too
    (finite only for gamma < 1/2).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not sol.grid.is_uniform:
        raise ValueError("dyadic increments need a uniform grid")
    mu = sol.mu if mu is None else mu
    grid = sol.grid
    t = grid.nodes
    n = grid.n_steps
    dt = grid.dt
    if t_min is None:
        t_min = 4.0 * dt
    i_min = max(int(np.ceil(t_min / dt - 1e-12)), 1)
    if delta is not None and not (0.5 * delta < gamma < 0.5):
        warnings.warn(
            f"gamma = {gamma} is outside (delta/2, 1/2) = "
            f"({0.5 * delta}, 0.5); the seminorm is reported anyway",
            stacklevel=2,
        )
    gamma_in_range = delta is None or (0.5 * delta < gamma < 0.5)

    best, t_at, h_at = 0.0, float("nan"), float("nan")
    ell1 = 0.0
    h_steps = n // 2
    while h_steps >= 1:
        h = h_steps * dt
        idx = np.arange(i_min, n - h_steps + 1)
        if idx.size:
            diffs = hnorm(sol.coeffs[idx + h_steps] - sol.coeffs[idx], sol.basis, mu)
            vals = (t[idx] / h) ** gamma * diffs
            j = int(np.argmax(vals))
            if vals[j] > best:
                best, t_at, h_at = float(vals[j]), float(t[idx[j]]), float(h)
            if ell is not None and ell.kind != "zero":
                inc = ell.cumulative_abs(t[idx] + h) - ell.cumulative_abs(t[idx])
                ell1 = max(ell1, float(np.max((t[idx] / h) ** gamma * inc)))
        h_steps //= 2

    ell2 = 0.0
    if ell is not None and ell.kind != "zero":
        ell2 = _history_weighted_sup(ell, grid, gamma, i_min)

    gate_value = None
    gate_passed = None
    if state_global is not None and history_global is not None and delta is not None:
        if gamma < 0.5:
            gate_value = float(
                16.0
                * beta_fn(1.0 - delta, 1.0 - 2.0 * gamma)
                * t[-1] ** (1.0 - delta)
                * (state_global**2 + history_global**2 * ell2**2)
            )
            gate_passed = bool(gate_value < 1.0)
        else:
            gate_value = float("inf")
            gate_passed = False

    return HolderReport(
        gamma=gamma,
        mu=mu,
        t_min=float(i_min * dt),
        seminorm=best,
        t_at=t_at,
        h_at=h_at,
        ell_star1=ell1,
        ell_star2=ell2,
        gate_value=gate_value,
        gate_passed=gate_passed,
        gamma_in_range=gamma_in_range,
    )
