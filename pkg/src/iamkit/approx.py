"""Complete Chebyshev polynomial approximation on hyper-rectangles.

Values at tensor Chebyshev-Gauss nodes are projected onto the complete
(total-degree) basis; because the tensor basis is discretely orthogonal
at those nodes, the least-squares projection reduces to exact inner
products.  Also provides the forward-reachability construction of
time-varying approximation domains.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .core import DomainError

__all__ = [
    "Domain",
    "ChebApprox",
    "cheb_nodes_1d",
    "cheb_nodes",
    "complete_indices",
    "fit_tensor",
    "basis_matrix",
    "build_time_varying_domains",
]


@dataclass(frozen=True)
class Domain:
    """Per-dimension interval bounds for the continuous state box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise DomainError("domain requires lo < hi elementwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def to_unit(self, x):
        """Affine map onto [-1, 1]^n."""
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / self.width - 1.0

    def from_unit(self, xhat):
        return self.lo + (np.asarray(xhat, dtype=float) + 1.0) * self.width / 2.0

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return np.all(x >= self.lo - tol, axis=-1) & np.all(x <= self.hi + tol, axis=-1)

    def clamp(self, x):
        return np.clip(x, self.lo, self.hi)


def cheb_nodes_1d(m: int) -> np.ndarray:
    """The m Chebyshev-Gauss nodes cos((2k-1)pi/(2m)), ascending."""
    k = np.arange(1, m + 1)
    return np.cos((2.0 * k - 1.0) * np.pi / (2.0 * m))[::-1].copy()


def cheb_nodes(domain: Domain, points_per_dim: int) -> np.ndarray:
    """Full tensor product of mapped Chebyshev-Gauss nodes, shape (m^n, n)."""
    if points_per_dim < 1:
        raise DomainError("points_per_dim must be >= 1")
    one_d = cheb_nodes_1d(points_per_dim)
    axes = [domain.lo[i] + (one_d + 1.0) * domain.width[i] / 2.0 for i in range(domain.dim)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


@functools.lru_cache(maxsize=None)
def _complete_indices_cached(dim: int, degree: int):
    idx = [
        a
        for a in itertools.product(range(degree + 1), repeat=dim)
        if sum(a) <= degree
    ]
    arr = np.array(idx, dtype=int)
    arr.setflags(write=False)
    return arr


def complete_indices(dim: int, degree: int) -> np.ndarray:
    """All multi-indices with total degree <= degree, shape (n_terms, dim)."""
    return _complete_indices_cached(int(dim), int(degree))


def _cheb_t_matrix(xhat: np.ndarray, degree: int) -> np.ndarray:
    """T_j(xhat) for j = 0..degree, shape (len(xhat), degree+1)."""
    T = np.empty((len(xhat), degree + 1))
    T[:, 0] = 1.0
    if degree >= 1:
        T[:, 1] = xhat
    for j in range(2, degree + 1):
        T[:, j] = 2.0 * xhat * T[:, j - 1] - T[:, j - 2]
    return T


def _cheb_u_matrix(xhat: np.ndarray, degree: int) -> np.ndarray:
    """U_j(xhat) for j = 0..degree, shape (len(xhat), degree+1)."""
    U = np.empty((len(xhat), degree + 1))
    U[:, 0] = 1.0
    if degree >= 1:
        U[:, 1] = 2.0 * xhat
    for j in range(2, degree + 1):
        U[:, j] = 2.0 * xhat * U[:, j - 1] - U[:, j - 2]
    return U


@dataclass(frozen=True)
class ChebApprox:
    """Fitted complete-Chebyshev approximation on a domain."""

    domain: Domain
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        n_expected = len(complete_indices(self.domain.dim, self.degree))
        if self.coeffs.shape != (n_expected,):
            raise DomainError(
                f"coefficient count {self.coeffs.shape} != complete basis size {n_expected}"
            )

    @property
    def indices(self) -> np.ndarray:
        return complete_indices(self.domain.dim, self.degree)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Value at point(s) x, shape (..., dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Phi = basis_matrix(self.domain, self.degree, x)
        out = Phi @ self.coeffs
        return out if out.size > 1 else float(out[0])

    def eval_with_gradient(self, x):
        """Value and analytic gradient at point(s) x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Phi, dPhi = basis_matrix(self.domain, self.degree, x, derivatives=True)
        vals = Phi @ self.coeffs
        grads = np.stack([dP @ self.coeffs for dP in dPhi], axis=-1)
        if vals.size == 1:
            return float(vals[0]), grads[0]
        return vals, grads

    def to_text(self) -> str:
        """Serialize to a plain-text block (degree, domain, coefficients)."""
        lines = [
            f"degree {self.degree}",
            "lo " + " ".join(repr(float(v)) for v in self.domain.lo),
            "hi " + " ".join(repr(float(v)) for v in self.domain.hi),
            "coeffs " + " ".join(repr(float(v)) for v in self.coeffs),
        ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ChebApprox":
        fields = {}
        for line in text.strip().splitlines():
            key, _, rest = line.partition(" ")
            fields[key] = rest
        degree = int(fields["degree"])
        lo = np.array([float(v) for v in fields["lo"].split()])
        hi = np.array([float(v) for v in fields["hi"].split()])
        coeffs = np.array([float(v) for v in fields["coeffs"].split()])
        return ChebApprox(Domain(lo, hi), degree, coeffs)


def basis_matrix(
    domain: Domain,
    degree: int,
    x: np.ndarray,
    derivatives: bool = False,
    deriv_dims=None,
):
    """Complete-basis design matrix at points x, shape (N, n_terms).

    With ``derivatives=True`` also returns the list of derivative
    matrices (in original, unmapped coordinates) for the dimensions in
    ``deriv_dims`` (all dimensions when None).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != domain.dim:
        raise DomainError(f"points have dim {x.shape[1]}, domain has {domain.dim}")
    idx = complete_indices(domain.dim, degree)
    xhat = domain.to_unit(x)
    T = [_cheb_t_matrix(xhat[:, d], degree) for d in range(domain.dim)]
    N = x.shape[0]
    Phi = np.ones((N, len(idx)))
    for d in range(domain.dim):
        Phi *= T[d][:, idx[:, d]]
    if not derivatives:
        return Phi
    scale = 2.0 / domain.width
    dims = list(range(domain.dim)) if deriv_dims is None else list(deriv_dims)
    dPhi = []
    for d in dims:
        U = _cheb_u_matrix(xhat[:, d], degree)
        D = np.zeros((N, degree + 1))
        for j in range(1, degree + 1):
            D[:, j] = j * U[:, j - 1]
        G = (D * scale[d])[:, idx[:, d]]
        for e in range(domain.dim):
            if e != d:
                G *= T[e][:, idx[:, e]]
        dPhi.append(G)
    return Phi, dPhi


def fit_tensor(domain: Domain, degree: int, values, points_per_dim: int | None = None) -> ChebApprox:
    """Least-squares projection of tensor node data onto the complete basis.

    ``values`` is the flat (or tensor-shaped) array of function values at
    ``cheb_nodes(domain, points_per_dim)`` in C order.  The tensor basis
    is discretely orthogonal at Chebyshev-Gauss nodes, so the projection
    is computed by exact inner products.
    """
    n = domain.dim
    values = np.asarray(values, dtype=float)
    if points_per_dim is None:
        points_per_dim = int(round(values.size ** (1.0 / n)))
    m = points_per_dim
    if m < degree + 1:
        raise DomainError(f"points_per_dim {m} must be >= degree+1 = {degree + 1}")
    if values.size != m**n:
        raise DomainError(f"expected {m ** n} node values, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise DomainError("node values must be finite")
    tensor = values.reshape((m,) * n)
    one_d = cheb_nodes_1d(m)
    B = _cheb_t_matrix(one_d, degree)  # (m, degree+1)
    norm = np.full(degree + 1, 2.0 / m)
    norm[0] = 1.0 / m
    # contract each axis with the normalized basis
    out = tensor
    for _axis in range(n):
        out = np.tensordot(out, B * norm[None, :], axes=([0], [0]))
    idx = complete_indices(n, degree)
    coeffs = out[tuple(idx.T)]
    return ChebApprox(domain, degree, coeffs)


def build_time_varying_domains(
    initial: Domain,
    horizon: int,
    transition_sampler,
    margin: float = 0.05,
    width_cap: float | None = None,
):
    """Forward-reachability construction of per-period approximation domains.

    ``transition_sampler(t, domain) -> (N, dim) array`` must enumerate the
    images of extreme (state, action, shock) combinations under the
    period-t transition.  Each successor box is the bounding box of those
    images inflated by ``margin`` of its width per side.
    """
    domains = [initial]
    for t in range(horizon):
        pts = np.atleast_2d(np.asarray(transition_sampler(t, domains[-1]), dtype=float))
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        pad = margin * np.maximum(hi - lo, 1e-12 * np.abs(hi))
        lo, hi = lo - pad, hi + pad
        if width_cap is not None and np.any(hi - lo > width_cap):
            raise DomainError(
                f"domain width {hi - lo} exceeds cap {width_cap} at period {t + 1}"
            )
        domains.append(Domain(lo, hi))
    return domains
