"""Relaxation profiles omega(t, lambda) by implicit product integration.

omega solves the scalar Volterra equation

    omega(t) + lam * int_0^t (1 + m(t - tau)) omega(tau) dtau = 1

and replaces exp(-lam*t) of classical diffusion as the per-mode decay
profile.  The solver collocates with exact kernel cell moments; see
``volterra`` for the trapezoid/rectangle scheme switch on stiff batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grids import TimeGrid
from .kernels import MemoryKernel
from .volterra import STIFF_THRESHOLD, second_kind_solve

__all__ = [
    "RelaxationTable",
    "solve_relaxation",
    "relaxation_batch",
    "PropertyCheck",
    "RelaxationReport",
    "verify_relaxation",
]


@dataclass(frozen=True)
class RelaxationTable:
    """omega samples, one row per grid node, one column per eigenvalue."""

    grid: TimeGrid
    lambdas: np.ndarray
    omega: np.ndarray
    scheme: str

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        if np.any(lam <= 0.0):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(lam) < 0.0):
            raise ValueError("eigenvalues must be sorted ascending")
        if self.omega.shape != (self.grid.nodes.size, lam.size):
            raise ValueError("omega shape does not match grid x lambdas")

    @property
    def n_columns(self) -> int:
        return self.lambdas.size

    def column(self, lam: float) -> np.ndarray:
        idx = np.nonzero(self.lambdas == lam)[0]
        if idx.size == 0:
            raise KeyError(f"lambda {lam!r} not in table")
        return self.omega[:, idx[0]]


def solve_relaxation(
    kernel: MemoryKernel,
    lam: float,
    grid: TimeGrid,
    stiff_threshold: float = STIFF_THRESHOLD,
    scheme: Optional[str] = None,
) -> np.ndarray:
    """omega(t, lam) samples on the grid nodes; omega[0] = 1."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    x, _ = second_kind_solve(
        kernel.a_moments, grid, float(lam), 1.0, stiff_threshold, scheme
    )
    return x


def relaxation_batch(
    kernel: MemoryKernel,
    lambdas,
    grid: TimeGrid,
    stiff_threshold: float = STIFF_THRESHOLD,
    scheme: Optional[str] = None,
) -> RelaxationTable:
    """Solve all columns sharing one kernel moment table and one scheme."""
    lams = np.asarray(lambdas, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise ValueError("lambdas must be a nonempty 1-d sequence")
    if np.any(np.diff(lams) < 0.0):
        raise ValueError("lambdas must be sorted ascending")
    omega, used = second_kind_solve(
        kernel.a_moments, grid, lams, 1.0, stiff_threshold, scheme
    )
    return RelaxationTable(grid, lams, omega, used)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    lam: float
    worst_margin: float
    passed: bool
    t_worst: float = 0.0


@dataclass(frozen=True)
class RelaxationReport:
    rows: Tuple[PropertyCheck, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def worst(self, name: str) -> float:
        margins = [r.worst_margin for r in self.rows if r.name == name]
        if not margins:
            raise KeyError(f"no rows named {name!r}")
        return min(margins)


def verify_relaxation(
    table: RelaxationTable, kernel: MemoryKernel, tol: float = 1e-8
) -> RelaxationReport:
    """Check the structural estimates of the relaxation profile per column.

    The estimates are guarantees only when 1 + m is completely positive
    (screen a kernel with ``kernels.certify_completely_positive``).  Outside
    that class the monotonicity rows can fail genuinely, not numerically:
    a table with a flat left extension has a concave kink, its resolvent
    really does rebound, and the report will say so.

    positivity        omega > 0; strongly damped columns cancel down to
                      +-eps or exactly 0 in double precision, so the pass
                      rule is margin >= -tol like the other rows
    upper_bound       omega <= 1 / (1 + lam * int_0^t (1+m)), exact cumulative
    monotone_time     omega nonincreasing in t
    integral_bound    int_0^t omega <= (1 - omega(t)) / lam, quadrature
                      matched to the table's scheme: trapezoid rule for
                      trapezoid tables, right-endpoint rule for rectangle
                      tables (the trapezoid rule overshoots the discrete
                      identity by O(h) on strongly damped columns)
    monotone_lambda   columns nonincreasing as lambda grows (adjacent pairs;
                      the row is labeled by the larger lambda)
    """
    t = table.grid.nodes
    steps = table.grid.steps()
    cum_a = t + kernel.cumulative(t)
    rows = []
    for n, lam in enumerate(table.lambdas):
        w = table.omega[:, n]
        bound = 1.0 / (1.0 + lam * cum_a)
        m_pos = float(w.min())
        m_bound = float(np.min(bound - w))
        mono = w[:-1] - w[1:]
        m_mono = float(mono.min())
        if table.scheme == "trapezoid":
            quad = cumulative_trapezoid(w, t, initial=0.0)
        else:
            quad = np.concatenate(([0.0], np.cumsum(steps * w[1:])))
        slack = (1.0 - w) / lam - quad
        m_int = float(slack.min())
        rows.append(
            PropertyCheck("positivity", lam, m_pos, m_pos >= -tol, t[np.argmin(w)])
        )
        rows.append(
            PropertyCheck(
                "upper_bound", lam, m_bound, m_bound >= -tol, t[np.argmin(bound - w)]
            )
        )
        rows.append(
            PropertyCheck(
                "monotone_time", lam, m_mono, m_mono >= -tol, t[np.argmin(mono) + 1]
            )
        )
        rows.append(
            PropertyCheck(
                "integral_bound", lam, m_int, m_int >= -tol, t[np.argmin(slack)]
            )
        )
    for n in range(table.n_columns - 1):
        # equal lambdas (degenerate eigenvalues) must agree exactly
        diff = table.omega[:, n] - table.omega[:, n + 1]
        m = float(diff.min())
        rows.append(
            PropertyCheck(
                "monotone_lambda",
                table.lambdas[n + 1],
                m,
                m >= -tol,
                t[np.argmin(diff)],
            )
        )
    return RelaxationReport(tuple(rows), tol)
