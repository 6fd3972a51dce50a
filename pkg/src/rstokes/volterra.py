"""Product-integration machinery for Volterra convolution equations.

Given a kernel k with exact cell moments

    A0 = int_a^b k(s) ds,    A1 = int_a^b s * k(s) ds

and data phi treated as piecewise linear on the grid, each cell
[t_j, t_{j+1}] of the convolution (k * phi)(t_i) contributes with endpoint
weights

    left  = (A1 - a*A0) / h   on phi_j
    right = (b*A0 - A1) / h   on phi_{j+1}

over the lag cell [a, b] = [t_i - t_{j+1}, t_i - t_j], h = b - a.  Both are
integrals of k against nonnegative hat functions, hence >= 0 for k >= 0.

Second-kind equations x + lam*(a conv x) = rhs are stepped implicitly.  The
piecewise-linear (trapezoid) rule is second order but loses positivity once
lam * left[0] > 1 (the same mechanism as Crank-Nicolson ringing); those stiff
columns switch to the piecewise-constant right-endpoint rule, which is first
order but preserves positivity and monotonicity for nonincreasing kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .grids import TimeGrid

__all__ = [
    "LagWeights",
    "lag_weights",
    "product_convolve",
    "newest_left_weight",
    "second_kind_solve",
    "first_kind_solve",
    "trapezoid_convolve",
    "rectangle_convolve",
]

Moments = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

STIFF_THRESHOLD = 0.9


@dataclass(frozen=True)
class LagWeights:
    """Per-lag-cell endpoint weights on a uniform grid.

    left[k] multiplies phi at the older node (lag cell k = i - j - 1 maps to
    phi_{i-1-k}), right[k] the newer one (phi_{i-k}).
    """

    left: np.ndarray
    right: np.ndarray

    @property
    def cell(self) -> np.ndarray:
        """Plain cell masses A0 (the piecewise-constant rule's weights)."""
        return self.left + self.right


def lag_weights(moments: Moments, grid: TimeGrid) -> LagWeights:
    if not grid.is_uniform:
        raise ValueError("lag weights require a uniform grid")
    h = grid.dt
    edges = grid.nodes
    lo, hi = edges[:-1], edges[1:]
    a0, a1 = moments(lo, hi)
    left = (a1 - lo * a0) / h
    right = (hi * a0 - a1) / h
    return LagWeights(left, right)


def product_convolve(weights: LagWeights, phi: np.ndarray) -> np.ndarray:
    """(k * phi)(t_i) at every node for piecewise-linear phi (uniform grid).

    phi has shape (N+1,) or (N+1, M); columns are convolved independently.
    """
    phi = np.asarray(phi, dtype=float)
    squeeze = phi.ndim == 1
    if squeeze:
        phi = phi[:, None]
    n = phi.shape[0] - 1
    u = weights.left[:n, None]
    v = weights.right[:n, None]
    conv_u = fftconvolve(u, phi, axes=0)
    conv_v = fftconvolve(v, phi, axes=0)
    out = np.zeros_like(phi)
    idx = np.arange(1, n + 1)
    out[1:] = conv_u[idx - 1] + conv_v[idx]
    # the full convolution (right * phi)_i picks up the k = i term
    # right_i * phi_0, which lies outside the i-1 lag cells; remove it
    mask = idx <= n - 1
    out[1:][mask] -= v[idx[mask], 0][:, None] * phi[0]
    if squeeze:
        return out[:, 0]
    return out


def _uniform_second_kind(
    weights: LagWeights,
    lams: np.ndarray,
    rhs: np.ndarray,
    stiff_threshold: float,
) -> Tuple[np.ndarray, str]:
    u, v = weights.left, weights.right
    a0 = weights.cell
    n = u.size
    x = np.zeros((n + 1, lams.size))
    x[0] = rhs[0]
    # one scheme for the whole call so columns stay mutually comparable
    # (mixing rules breaks monotonicity across lambda at the switch point)
    if np.max(lams) * u[0] <= stiff_threshold:
        denom = 1.0 + lams * v[0]
        for i in range(1, n + 1):
            past = u[i - 1 :: -1] @ x[:i]
            if i > 1:
                past = past + v[i - 1 : 0 : -1] @ x[1:i]
            x[i] = (rhs[i] - lams * past) / denom
        return x, "trapezoid"
    denom = 1.0 + lams * a0[0]
    for i in range(1, n + 1):
        past = a0[i - 1 : 0 : -1] @ x[1:i] if i > 1 else 0.0
        x[i] = (rhs[i] - lams * past) / denom
    return x, "rectangle"


def _graded_second_kind(
    moments: Moments,
    grid: TimeGrid,
    lams: np.ndarray,
    rhs: np.ndarray,
    stiff_threshold: float,
) -> Tuple[np.ndarray, str]:
    t = grid.nodes
    steps = grid.steps()
    n = grid.n_steps
    # newest-cell left weight per row controls stiffness of the implicit step
    _, m1_first = moments(np.zeros_like(steps), steps)
    u0 = m1_first / steps
    x = np.zeros((n + 1, lams.size))
    x[0] = rhs[0]
    trap = bool(np.max(lams) * np.max(u0) <= stiff_threshold)
    for i in range(1, n + 1):
        hi = t[i] - t[:i]
        lo = t[i] - t[1 : i + 1]
        a0, a1 = moments(lo, hi)
        if trap:
            left = (a1 - lo * a0) / steps[:i]
            right = (hi * a0 - a1) / steps[:i]
            past = left @ x[:i]
            if i > 1:
                past = past + right[:-1] @ x[1:i]
            x[i] = (rhs[i] - lams * past) / (1.0 + lams * right[-1])
        else:
            past = a0[:-1] @ x[1:i] if i > 1 else 0.0
            x[i] = (rhs[i] - lams * past) / (1.0 + lams * a0[-1])
    return x, "trapezoid" if trap else "rectangle"


def newest_left_weight(moments: Moments, grid: TimeGrid) -> float:
    """Largest left weight of the newest lag cell; lam times this measures
    the stiffness of the implicit trapezoid step."""
    steps = grid.steps()
    _, m1_first = moments(np.zeros_like(steps), steps)
    return float(np.max(m1_first / steps))


def second_kind_solve(
    moments: Moments,
    grid: TimeGrid,
    lam,
    rhs,
    stiff_threshold: float = STIFF_THRESHOLD,
    scheme: Optional[str] = None,
) -> Tuple[np.ndarray, str]:
    """Solve x + lam * (a conv x) = rhs by implicit product integration.

    Parameters
    ----------
    moments : callable (lo, hi) -> (A0, A1)
        Exact cell moments of the kernel a.
    lam : positive scalar or 1-d array
        One column is solved per value, sharing the weight table.
    rhs : scalar or array of shape (N+1,)
        Right-hand side samples on the grid nodes.
    scheme : None | "trapezoid" | "rectangle"
        None resolves automatically: trapezoid only when max(lam) times the
        newest-cell left weight stays below the stiffness threshold.  Forcing
        "trapezoid" on a stiff batch gives damped ringing on the stiff
        columns (useful when those columns are known to carry zero data);
        forcing "rectangle" trades accuracy for unconditional positivity.

    Returns
    -------
    x : ndarray, shape (N+1,) for scalar lam else (N+1, len(lam))
    scheme : "trapezoid" | "rectangle"
        The rule used for every column of this call.
    """
    lams = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lams <= 0.0):
        raise ValueError("lam must be positive")
    if scheme not in (None, "trapezoid", "rectangle"):
        raise ValueError("scheme must be None, 'trapezoid' or 'rectangle'")
    if scheme is not None:
        threshold = np.inf if scheme == "trapezoid" else -np.inf
    else:
        threshold = stiff_threshold
    rhs_arr = np.broadcast_to(np.asarray(rhs, dtype=float), grid.nodes.shape).astype(float)
    if grid.is_uniform:
        x, used = _uniform_second_kind(
            lag_weights(moments, grid), lams, rhs_arr, threshold
        )
    else:
        x, used = _graded_second_kind(moments, grid, lams, rhs_arr, threshold)
    if np.isscalar(lam) or np.ndim(lam) == 0:
        return x[:, 0], used
    return x, used


def first_kind_solve(moments: Moments, grid: TimeGrid, rhs) -> Tuple[np.ndarray, float]:
    """Solve (a conv k)(t_i) = rhs_i for piecewise-constant k by substitution.

    k is constant on each cell (t_{j-1}, t_j]; the value is attributed to the
    right endpoint, so the returned samples live on nodes[1:].  Returns the
    samples and the smallest diagonal weight (conditioning indicator).
    """
    t = grid.nodes
    n = grid.n_steps
    rhs_arr = np.broadcast_to(np.asarray(rhs, dtype=float), t.shape)
    k = np.zeros(n + 1)
    if grid.is_uniform:
        a0, _ = moments(t[:-1], t[1:])
        diag = float(a0[0])
        if diag <= 0.0:
            raise ValueError("first-kind diagonal weight vanished")
        for i in range(1, n + 1):
            past = a0[i - 1 : 0 : -1] @ k[1:i] if i > 1 else 0.0
            k[i] = (rhs_arr[i] - past) / diag
        return k[1:], diag
    min_diag = np.inf
    for i in range(1, n + 1):
        hi = t[i] - t[:i]
        lo = t[i] - t[1 : i + 1]
        a0, _ = moments(lo, hi)
        diag = float(a0[-1])
        min_diag = min(min_diag, diag)
        if diag <= 0.0:
            raise ValueError("first-kind diagonal weight vanished")
        past = a0[:-1] @ k[1:i] if i > 1 else 0.0
        k[i] = (rhs_arr[i] - past) / diag
    return k[1:], float(min_diag)


def rectangle_convolve(kernel_samples: np.ndarray, phi: np.ndarray, dt: float) -> np.ndarray:
    """Right-endpoint lag convolution on a uniform grid.

    (k * phi)(t_i) ~ dt * sum_{j=1..i} k_j phi_{i-j}.  The newest sample of
    phi is weighted by k at one full step, never by k(0), which keeps the
    response of a strongly damped column at the size of its true convolution
    mass instead of dt/2 (the trapezoid rule's newest weight).
    """
    K = np.asarray(kernel_samples, dtype=float)
    G = np.asarray(phi, dtype=float)
    squeeze = G.ndim == 1
    if squeeze:
        G = G[:, None]
    if K.ndim == 1:
        K = K[:, None]
    n = G.shape[0] - 1
    out = np.zeros_like(G, shape=(n + 1, G.shape[1]))
    if n >= 1:
        out[1:] = dt * fftconvolve(K[1:], G, axes=0)[:n]
    if squeeze:
        return out[:, 0]
    return out


def trapezoid_convolve(kernel_samples: np.ndarray, phi: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid-rule lag convolution on a uniform grid.

    (k * phi)(t_i) ~ dt * (sum_{j=0..i} k_{i-j} phi_j - k_i phi_0 / 2
    - k_0 phi_i / 2).  Both factors are nodal samples; columns are modes.
    """
    K = np.asarray(kernel_samples, dtype=float)
    G = np.asarray(phi, dtype=float)
    squeeze = G.ndim == 1
    if squeeze:
        G = G[:, None]
    if K.ndim == 1:
        K = K[:, None]
    n = G.shape[0] - 1
    full = fftconvolve(K, G, axes=0)[: n + 1]
    out = dt * (full - 0.5 * K * G[0] - 0.5 * K[0] * G)
    out[0] = 0.0
    if squeeze:
        return out[:, 0]
    return out
