"""Dirichlet sine eigenbases on interval and rectangle domains.

Fields are coefficient vectors in the orthonormal eigenbasis of the negative
Laplacian; all norms, fractional powers, and gradient pairings are diagonal.
Collocation uses 2N+1 equispaced interior nodes per axis, which makes the
discrete sine transform an exact quadrature for products of basis functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Interval",
    "Rectangle",
    "SpectralBasis",
    "build_basis",
    "SpectralField",
    "project",
    "synthesize",
    "hnorm",
    "fractional_laplacian",
    "gradient_pairing",
]


@dataclass(frozen=True)
class Interval:
    length: float

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError("interval length must be positive")

    @property
    def ndim(self) -> int:
        return 1


@dataclass(frozen=True)
class Rectangle:
    lx: float
    ly: float

    def __post_init__(self):
        if self.lx <= 0.0 or self.ly <= 0.0:
            raise ValueError("rectangle side lengths must be positive")

    @property
    def ndim(self) -> int:
        return 2


def _axis_nodes(length: float, n_modes: int):
    # 2N+1 interior nodes: exact discrete orthogonality for sine modes <= 2N+1
    m = 2 * n_modes + 2
    q = np.arange(1, m)
    return q * length / m, length / m


class SpectralBasis:
    """Eigenpairs sorted ascending by eigenvalue with deterministic ties.

    Interval (0, L): lambda_n = (n pi / L)^2, e_n = sqrt(2/L) sin(n pi x / L).
    Rectangle (0,Lx)x(0,Ly): tensor modes, ties broken lexicographically
    (first axis index first).
    """

    def __init__(self, domain, n_modes: int):
        if n_modes < 1:
            raise ValueError("need at least one mode")
        self.domain = domain
        self.n_modes = int(n_modes)
        if isinstance(domain, Interval):
            n = np.arange(1, n_modes + 1)
            self.indices = n
            self.eigenvalues = (n * np.pi / domain.length) ** 2
            xs, wx = _axis_nodes(domain.length, n_modes)
            self.nodes = xs
            self.node_weights = np.full(xs.size, wx)
        elif isinstance(domain, Rectangle):
            j, k = np.meshgrid(
                np.arange(1, n_modes + 1), np.arange(1, n_modes + 1), indexing="ij"
            )
            j, k = j.ravel(), k.ravel()
            lam = (j * np.pi / domain.lx) ** 2 + (k * np.pi / domain.ly) ** 2
            order = np.lexsort((k, j, lam))[:n_modes]
            self.indices = np.stack([j[order], k[order]], axis=1)
            self.eigenvalues = lam[order]
            xs, wx = _axis_nodes(domain.lx, n_modes)
            ys, wy = _axis_nodes(domain.ly, n_modes)
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            self.nodes = np.stack([gx.ravel(), gy.ravel()], axis=1)
            self.node_weights = np.full(self.nodes.shape[0], wx * wy)
        else:
            raise TypeError(f"unsupported domain {domain!r}")
        self.synthesis = self.eval_modes(self.nodes)
        self.gradients = self.eval_grad_modes(self.nodes)

    def __eq__(self, other):
        return (
            isinstance(other, SpectralBasis)
            and self.domain == other.domain
            and self.n_modes == other.n_modes
        )

    def __hash__(self):
        return hash((self.domain, self.n_modes))

    def __repr__(self):
        return f"SpectralBasis({self.domain!r}, n_modes={self.n_modes})"

    def eval_modes(self, points) -> np.ndarray:
        """Eigenfunction values, shape (n_points, n_modes)."""
        pts = np.asarray(points, dtype=float)
        if isinstance(self.domain, Interval):
            L = self.domain.length
            x = pts.reshape(-1, 1)
            return np.sqrt(2.0 / L) * np.sin(self.indices[None, :] * np.pi * x / L)
        lx, ly = self.domain.lx, self.domain.ly
        pts = pts.reshape(-1, 2)
        j = self.indices[:, 0][None, :]
        k = self.indices[:, 1][None, :]
        sx = np.sin(j * np.pi * pts[:, :1] / lx)
        sy = np.sin(k * np.pi * pts[:, 1:] / ly)
        return np.sqrt(4.0 / (lx * ly)) * sx * sy

    def eval_grad_modes(self, points):
        """Per-axis eigenfunction derivatives, tuple of (n_points, n_modes)."""
        pts = np.asarray(points, dtype=float)
        if isinstance(self.domain, Interval):
            L = self.domain.length
            x = pts.reshape(-1, 1)
            freq = self.indices[None, :] * np.pi / L
            return (np.sqrt(2.0 / L) * freq * np.cos(freq * x),)
        lx, ly = self.domain.lx, self.domain.ly
        pts = pts.reshape(-1, 2)
        j = self.indices[:, 0][None, :]
        k = self.indices[:, 1][None, :]
        fx = j * np.pi / lx
        fy = k * np.pi / ly
        norm = np.sqrt(4.0 / (lx * ly))
        sx, cx = np.sin(fx * pts[:, :1]), np.cos(fx * pts[:, :1])
        sy, cy = np.sin(fy * pts[:, 1:]), np.cos(fy * pts[:, 1:])
        return (norm * fx * cx * sy, norm * fy * sx * cy)


def build_basis(domain, n_modes: int) -> SpectralBasis:
    return SpectralBasis(domain, n_modes)


@dataclass(frozen=True)
class SpectralField:
    """A field as coefficients in the eigenbasis."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", c)
        if c.shape != (self.basis.n_modes,):
            raise ValueError("coefficient length does not match basis")

    def norm(self, rho: float = 0.0) -> float:
        return float(hnorm(self.coeffs, self.basis, rho))


def project(basis: SpectralBasis, samples) -> np.ndarray:
    """Coefficients from samples at the collocation nodes.

    samples: (n_points,) or (..., n_points); leading axes are preserved.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[-1] != basis.nodes.shape[0]:
        raise ValueError("sample count does not match collocation nodes")
    return (s * basis.node_weights) @ basis.synthesis


def synthesize(basis: SpectralBasis, coeffs, points=None) -> np.ndarray:
    """Point values of the field; defaults to the collocation nodes."""
    c = np.asarray(coeffs, dtype=float)
    E = basis.synthesis if points is None else basis.eval_modes(points)
    return c @ E.T


def hnorm(coeffs, basis: SpectralBasis, rho: float = 0.0):
    """Hilbert-scale norm (sum lambda_n^rho c_n^2)^(1/2); rho may be negative."""
    c = np.asarray(coeffs, dtype=float)
    w = basis.eigenvalues**rho
    return np.sqrt(np.sum(w * c * c, axis=-1))


def fractional_laplacian(coeffs, basis: SpectralBasis, gamma: float):
    """Spectral fractional Laplacian: coefficients scaled by lambda_n^gamma."""
    return np.asarray(coeffs, dtype=float) * basis.eigenvalues**gamma


def gradient_pairing(coeffs, kappa, basis: SpectralBasis):
    """(grad u, grad kappa) = sum lambda_n u_n kappa_n (Green's identity)."""
    c = np.asarray(coeffs, dtype=float)
    k = np.asarray(kappa, dtype=float)
    return c @ (basis.eigenvalues * k)
