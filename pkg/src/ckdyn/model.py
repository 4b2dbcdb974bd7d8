"""Soft-spherical p-spin model: coefficients, covariance polynomial, disorder.

The inverse temperature is folded into the model once and for all: the drift
field returned by :func:`grad_field` already carries the factor ``beta`` and the
covariance polynomial :class:`NuPolynomial` carries ``beta**2``.  Downstream
code (simulator, limit-equation solver) therefore never sees ``beta``.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OrderTooLargeError

EXACT = "exact"
DECOUPLED = "decoupled"


@dataclass(frozen=True)
class ConfinementSpec:
    """Confinement ``N f(|x|^2/N)``; only ``f'`` enters the dynamics.

    ``kind="polynomial"`` gives ``f(rho) = kappa (rho - 1)**r``;
    ``kind="constant-fprime"`` gives ``f'(rho) = z`` (analytic test cases).
    """

    kind: str = "polynomial"
    kappa: float = 5.0
    r: int = 2
    z: float | None = None

    def __post_init__(self):
        if self.kind == "polynomial":
            if not self.kappa > 0:
                raise ConfigError(f"kappa must be > 0, got {self.kappa}")
            if self.r < 2 or self.r % 2:
                raise ConfigError(f"confinement exponent r must be an even integer >= 2, got {self.r}")
        elif self.kind == "constant-fprime":
            if self.z is None or not np.isfinite(self.z):
                raise ConfigError("constant-fprime confinement needs a finite z")
        else:
            raise ConfigError(f"unknown confinement kind {self.kind!r}")

    @classmethod
    def constant(cls, z):
        return cls(kind="constant-fprime", z=float(z))


def f_prime(conf: ConfinementSpec, rho):
    """Derivative of the confinement function, vectorised over ``rho``."""
    if conf.kind == "constant-fprime":
        return np.zeros_like(np.asarray(rho, dtype=float)) + conf.z
    rho = np.asarray(rho, dtype=float)
    return conf.kappa * conf.r * (rho - 1.0) ** (conf.r - 1)


@dataclass(frozen=True)
class ModelSpec:
    """Mixed p-spin model with coefficients ``a = (a_1, ..., a_m)``."""

    a: tuple[float, ...]
    beta: float = 1.0
    confinement: ConfinementSpec = field(default_factory=ConfinementSpec)
    N: int = 1
    disorder_mode: str = EXACT

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if len(self.a) < 1:
            raise ConfigError("need at least one interaction coefficient")
        if not any(v != 0.0 for v in self.a):
            raise ConfigError("at least one a_p must be non-zero (use beta = 0 for a free model)")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.disorder_mode not in (EXACT, DECOUPLED):
            raise ConfigError(f"unknown disorder mode {self.disorder_mode!r}")
        conf = self.confinement
        if conf.kind == "polynomial" and not conf.r > self.m / 2:
            raise ConfigError(f"growth condition needs r > m/2 (r={conf.r}, m={self.m})")

    @property
    def m(self):
        return len(self.a)

    def orders(self):
        """Interaction orders with a non-zero coefficient."""
        return [p for p, ap in enumerate(self.a, start=1) if ap != 0.0]

    @property
    def nu(self):
        return NuPolynomial.from_model(self)

    @classmethod
    def pure(cls, p, a_p=1.0, **kwargs):
        a = [0.0] * p
        a[p - 1] = a_p
        return cls(a=tuple(a), **kwargs)


def _horner(coeffs, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    for c in coeffs[::-1]:
        out = out * r + c
    return out


@dataclass(frozen=True, eq=False)
class NuPolynomial:
    """``nu(r) = beta^2 sum_p a_p^2 / p! r^p`` and its first three derivatives.

    ``coeffs[k]`` multiplies ``r**k``; ``derivs[d]`` holds the coefficients of
    the d-th derivative.
    """

    coeffs: np.ndarray
    derivs: tuple

    @classmethod
    def from_coefficients(cls, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if np.any(c < 0):
            raise ConfigError("nu must have non-negative coefficients")
        derivs = [c]
        for _ in range(3):
            derivs.append(np.polynomial.polynomial.polyder(derivs[-1]) if len(derivs[-1]) > 1
                          else np.zeros(1))
        return cls(coeffs=c, derivs=tuple(derivs))

    @classmethod
    def from_model(cls, spec: ModelSpec):
        c = np.zeros(spec.m + 1)
        for p, ap in enumerate(spec.a, start=1):
            c[p] = spec.beta ** 2 * ap ** 2 / math.factorial(p)
        return cls.from_coefficients(c)

    def __call__(self, r, order=0):
        return nu_eval(self, r, order)

    def psi(self, r):
        """``psi(r) = nu'(r) + r nu''(r)``."""
        r = np.asarray(r, dtype=float)
        return nu_eval(self, r, 1) + r * nu_eval(self, r, 2)


def nu_eval(nu: NuPolynomial, r, order=0):
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be in 0..3, got {order}")
    out = _horner(nu.derivs[order], r)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Disorder


@dataclass(frozen=True, eq=False)
class DisorderTensor:
    """Gaussian couplings, one dense order-p array per non-zero ``a_p``.

    In exact mode the arrays are fully symmetric, so the entry at any index
    tuple is the coupling of the underlying multiset.  In decoupled mode they
    are i.i.d. and carry no symmetry.
    """

    N: int
    couplings: dict
    mode: str = EXACT
    seed: int | None = None

    def coupling(self, indices):
        """Coupling ``J_{i_1...i_p}`` (0-based indices, any order in exact mode)."""
        indices = tuple(int(i) for i in indices)
        return float(self.couplings[len(indices)][indices])

    def multisets(self, p):
        """Iterate ``(sorted index tuple, coupling)`` over all multisets of size p."""
        T = self.couplings[p]
        for idx in itertools.combinations_with_replacement(range(self.N), p):
            yield idx, float(T[idx])

    @functools.cached_property
    def packed3(self):
        """p=3 couplings over pairs ``j <= k``, weighted by the number of orderings.

        ``G_i`` then needs ``packed3 @ (x[j] * x[k])``, reading half the memory
        of the dense contraction.  Exact mode only.
        """
        N = self.N
        iu, ju = np.triu_indices(N)
        weight = np.where(iu == ju, 1.0, 2.0)
        P = self.couplings[3].reshape(N, N * N)[:, iu * N + ju] * weight
        return iu, ju, np.ascontiguousarray(P)

    @classmethod
    def from_multisets(cls, N, entries, seed=None):
        """Build exact-mode disorder from ``{p: {multiset: value}}``.

        Every permutation of a multiset receives its value; missing multisets
        are zero.
        """
        couplings = {}
        for p, table in entries.items():
            T = np.zeros((N,) * p)
            for idx, value in table.items():
                for perm in set(itertools.permutations(idx)):
                    T[perm] = value
            couplings[p] = T
        return cls(N=N, couplings=couplings, mode=EXACT, seed=seed)


def multiplicity_factor(indices):
    """``c = prod_k l_k!`` over the multiplicities ``l_k`` of the index multiset."""
    counts = {}
    for i in indices:
        counts[i] = counts.get(i, 0) + 1
    return math.prod(math.factorial(l) for l in counts.values())


def symmetrize(W, p):
    """Average ``W`` over all permutations of its last ``p`` axes."""
    lead = W.ndim - p
    out = np.zeros_like(W)
    perms = list(itertools.permutations(range(p)))
    for perm in perms:
        out += np.transpose(W, tuple(range(lead)) + tuple(lead + q for q in perm))
    out /= len(perms)
    # copy each entry from its sorted-index representative so that the
    # result is symmetric bit for bit, not only up to rounding
    flat = _canonical_flat_index(W.shape[-1], p)
    return out.reshape(W.shape[:lead] + (-1,))[..., flat].reshape(W.shape)


@functools.lru_cache(maxsize=8)
def _canonical_flat_index(N, p):
    """Flat index of ``sorted(I)`` for every index tuple ``I`` of ``(N,) * p``."""
    dtype = np.int64 if float(N) ** p > 2 ** 31 else np.int32
    grids = np.ogrid[tuple(slice(0, N) for _ in range(p))]
    grids = [g.astype(dtype) for g in grids]
    if p == 2:
        lo, hi = np.minimum(*grids), np.maximum(*grids)
        return _frozen((lo * N + hi).ravel())
    if p == 3:
        a, b, c = grids
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        mid = a + b + c - lo - hi
        return _frozen(((lo * N + mid) * N + hi).ravel())
    idx = np.sort(np.stack(np.broadcast_arrays(*grids)), axis=0)
    flat = np.zeros(idx.shape[1:], dtype=dtype)
    for row in idx:
        flat = flat * N + row
    return _frozen(flat.ravel())


def _frozen(a):
    a.flags.writeable = False
    return a


def symmetric_gaussian(rng, N, p, batch=()):
    """Symmetric Gaussian tensor with ``Var J_I = c(I) N^{1-p}``.

    Symmetrising an i.i.d. standard tensor gives variance ``c(I)/p!`` on the
    entries of multiset ``I``; rescaling by ``sqrt(p!/N^(p-1))`` yields the
    target law, independently across multisets.
    """
    W = rng.standard_normal(tuple(batch) + (N,) * p)
    S = symmetrize(W, p) if p > 1 else W
    S *= math.sqrt(math.factorial(p) / float(N) ** (p - 1))
    return S


def decoupled_gaussian(rng, N, p, batch=()):
    """I.i.d. tensor with variance ``(p-1)!/N^(p-1)``.

    Reproduces the diagonal ``nu'(m) delta_ij`` part of the field covariance
    but not the O(1/N) off-diagonal part.
    """
    scale = math.sqrt(math.factorial(p - 1) / float(N) ** (p - 1))
    return scale * rng.standard_normal(tuple(batch) + (N,) * p)


def sample_disorder(spec: ModelSpec, seed) -> DisorderTensor:
    rng = np.random.default_rng(seed)
    couplings = {}
    for p in spec.orders():
        if spec.disorder_mode == EXACT:
            if p >= 4:
                raise OrderTooLargeError(
                    f"exact symmetric disorder is limited to p <= 3 (got p={p}); "
                    "use disorder mode 'decoupled'"
                )
            couplings[p] = symmetric_gaussian(rng, spec.N, p)
        else:
            couplings[p] = decoupled_gaussian(rng, spec.N, p)
    return DisorderTensor(N=spec.N, couplings=couplings, mode=spec.disorder_mode, seed=seed)


def _contract_tail(T, x, k):
    """Contract the last ``k`` axes of ``T`` with the vector ``x``."""
    N = x.shape[-1]
    for _ in range(k):
        T = (T.reshape(-1, N) @ x).reshape(T.shape[:-1])
    return T


def field_from_couplings(a, beta, couplings, x):
    """``beta * sum_p a_p/(p-1)! J^(p)[i, x, ..., x]``; tensors may carry batch axes."""
    out = None
    for p, T in couplings.items():
        ap = a[p - 1]
        if ap == 0.0:
            continue
        term = (ap / math.factorial(p - 1)) * _contract_tail(T, x, p - 1)
        out = term if out is None else out + term
    if out is None:
        return np.zeros(np.shape(x))
    return beta * out


def _check_state(x, N):
    x = np.asarray(x, dtype=float)
    if x.shape != (N,):
        raise ValueError(f"state must have shape ({N},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state vector contains non-finite entries")
    return x


def grad_field(spec: ModelSpec, J: DisorderTensor, x):
    """Drift field ``G(x) = -1/2 grad H(x)`` (beta included)."""
    x = _check_state(x, J.N)
    if J.mode != EXACT or 3 not in J.couplings or spec.a[2] == 0.0:
        return field_from_couplings(spec.a, spec.beta, J.couplings, x)
    iu, ju, P = J.packed3
    out = (0.5 * spec.a[2]) * (P @ (x[iu] * x[ju]))
    rest = {p: T for p, T in J.couplings.items() if p != 3}
    if rest:
        out = out + field_from_couplings(spec.a, 1.0, rest, x)
    return spec.beta * out


def hamiltonian_eval(spec: ModelSpec, J: DisorderTensor, x):
    """``H(x) = -2 beta sum_p a_p/p! sum_{i_1..i_p} J x^{i_1}...x^{i_p}``."""
    if J.mode != EXACT:
        raise ValueError("the Hamiltonian is only defined for exact (symmetric) disorder")
    x = _check_state(x, J.N)
    total = 0.0
    for p, T in J.couplings.items():
        total += spec.a[p - 1] / math.factorial(p) * float(_contract_tail(T, x, p))
    return -2.0 * spec.beta * total


def covariance_kernel(spec: ModelSpec, x, y, i, j):
    """``E_J[G^i(x) G^j(y)] = x^j y^i / N nu''(x.y/N) + 1{i=j} nu'(x.y/N)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    N = x.shape[0]
    if y.shape != x.shape:
        raise ValueError("x and y must have the same length")
    if not (0 <= i < N and 0 <= j < N):
        raise IndexError(f"kernel index ({i}, {j}) out of range for N={N}")
    nu = spec.nu
    q = float(x @ y) / N
    out = x[j] * y[i] / N * nu_eval(nu, q, 2)
    if i == j:
        out += nu_eval(nu, q, 1)
    return out


def covariance_matrix(spec: ModelSpec, x, y):
    """All entries ``[i, j]`` of :func:`covariance_kernel` at once."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    N = x.shape[0]
    nu = spec.nu
    q = float(x @ y) / N
    return np.outer(y, x) / N * nu_eval(nu, q, 2) + np.eye(N) * nu_eval(nu, q, 1)


def _partial_form(T, us, k):
    """Contract every argument of the multilinear form ``T`` except the k-th."""
    p = T.ndim
    Tk = np.moveaxis(T, k, 0)
    others = [us[q] for q in range(p) if q != k]
    for u in reversed(others):
        Tk = Tk @ u
    return Tk


def disorder_norm_estimate(spec: ModelSpec, J: DisorderTensor, iterations, seed=0):
    """Lower bound on the sup-norm of the disorder by alternating power iteration.

    For each order ``p`` the multilinear form
    ``N^((p-2)/2) J^(p)[u^1, ..., u^p]`` is maximised over unit vectors by
    block-coordinate ascent; each block update can only increase the value,
    so the estimate is non-decreasing in ``iterations``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    N = J.N
    best = 0.0
    for p in sorted(J.couplings):
        T = J.couplings[p]
        us = []
        for _ in range(p):
            u = rng.standard_normal(N)
            us.append(u / np.linalg.norm(u))
        value = 0.0
        for _ in range(iterations):
            for k in range(p):
                g = _partial_form(T, us, k)
                norm = float(np.linalg.norm(g))
                if norm == 0.0:
                    break
                us[k] = g / norm
                value = norm
        best = max(best, value * float(N) ** ((p - 2) / 2))
    return best
