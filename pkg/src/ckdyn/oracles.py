"""Independent reference computations.

None of these call into the solver or simulator time stepping: the Catalan /
semicircle series for the p=2 response, the non-crossing pairing series for
``H_C``, the closed forms of the free (beta = 0) problem and a brute-force
Monte-Carlo estimate of the field covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import (EXACT, ModelSpec, covariance_matrix, decoupled_gaussian, field_from_couplings,
                    symmetric_gaussian)

NC_ENUM_MAX = 6
NC_SERIES_MAX = 4
NC_NESTED_MAX = 2


def catalan(n):
    if n < 0:
        raise ValueError("n must be >= 0")
    return math.comb(2 * n, n) // (n + 1)


@dataclass(frozen=True)
class NCInvolution:
    """Fixed-point-free, crossing-free involution of ``{1, ..., 2n}``.

    ``pairing[k - 1]`` is the partner of ``k`` (1-based labels).
    """

    n: int
    pairing: tuple

    @property
    def pairs(self):
        return tuple((i, j) for i, j in enumerate(self.pairing, start=1) if i < j)

    @property
    def cr(self):
        """Left endpoints ``{i : i < sigma(i)}``."""
        return tuple(i for i, j in self.pairs)

    @property
    def crossing_free(self):
        ps = self.pairs
        return not any(a < b < c < d for a, c in ps for b, d in ps)

    def is_valid(self):
        s = self.pairing
        if len(s) != 2 * self.n:
            return False
        ok = all(s[s[k] - 1] == k + 1 and s[k] != k + 1 for k in range(2 * self.n))
        return ok and self.crossing_free and len(self.cr) == self.n


def _nc_matchings(labels):
    if not labels:
        yield ()
        return
    first = labels[0]
    # the partner of `first` must enclose an even number of points
    for k in range(1, len(labels), 2):
        for inner in _nc_matchings(labels[1:k]):
            for outer in _nc_matchings(labels[k + 1:]):
                yield ((first, labels[k]),) + inner + outer


def nc_pairings_enumerate(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > NC_ENUM_MAX:
        raise DomainError(f"enumeration limited to n <= {NC_ENUM_MAX}, got {n}")
    out = []
    for pairs in _nc_matchings(tuple(range(1, 2 * n + 1))):
        sigma = [0] * (2 * n)
        for i, j in pairs:
            sigma[i - 1] = j
            sigma[j - 1] = i
        out.append(NCInvolution(n=n, pairing=tuple(sigma)))
    return out


def bessel_h(tau):
    """Exponential moment of the semicircle law on ``[-2, 2]``.

    ``h(tau) = sum_n Cat_n tau^(2n) / (2n)! = I_1(2 tau) / tau``; it solves
    ``h'(tau) = int_0^tau h(u) h(tau - u) du`` with ``h(0) = 1``.  Summed term
    by term until the terms stop contributing.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    x = tau * tau
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 0
    while True:
        # Cat_{k+1}/Cat_k * 1/((2k+1)(2k+2)) = 1/((k+1)(k+2))
        term = term * x / ((k + 1) * (k + 2))
        total = total + term
        k += 1
        if (k + 1) * (k + 2) > x.max(initial=0.0) and np.all(term <= 1e-17 * total):
            break
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class NCSeriesResult:
    value: float
    truncation_bound: float
    terms: tuple


def _simplex_integral(integrand_fn, a, b, order, points):
    """``int_{a <= t_1 <= ... <= t_order <= b}`` by nested cumulative trapezoid."""
    g = np.linspace(a, b, points)
    dx = g[1] - g[0]
    F = integrand_fn(g)  # shape (points,) * order, axis k <-> t_{k+1}
    for _ in range(order - 1):
        # integrate t_1 from a up to t_2 (both live on the grid), collapse the diagonal
        Q = np.zeros_like(F)
        Q[1:] = np.cumsum(0.5 * dx * (F[1:] + F[:-1]), axis=0)
        idx = np.arange(points)
        F = Q[idx, idx]
    return float(dx * (F.sum() - 0.5 * (F[0] + F[-1])))


def h_series_nc(kernel, s, t, n_max, points=64):
    """Truncated non-crossing pairing series for ``H_C(s, t)``.

    ``kernel`` is either a constant ``c`` (closed form: the ordered simplex in
    dimension 2n has volume ``(s-t)^(2n)/(2n)!``) or a vectorised callable
    ``k(a, b) = nu''(C(a, b))`` evaluated with ``a >= b``; the latter uses
    nested trapezoid quadrature and supports ``n_max <= 2``.
    """
    if s < t:
        raise ValueError("need s >= t")
    if n_max > NC_SERIES_MAX:
        raise DomainError(f"n_max limited to {NC_SERIES_MAX}")
    tau = s - t
    terms = []
    if callable(kernel):
        if n_max > NC_NESTED_MAX:
            raise DomainError(f"non-constant kernels support n_max <= {NC_NESTED_MAX}")
        g = np.linspace(t, s, points)
        sup = float(np.max(np.abs(kernel(g[:, None], g[None, :]))))
        for n in range(1, n_max + 1):
            pairings = nc_pairings_enumerate(n)

            def integrand(grid, pairings=pairings, n=n):
                axes = np.ix_(*([grid] * (2 * n)))
                total = 0.0
                for sigma in pairings:
                    prod = 1.0
                    for i, j in sigma.pairs:
                        prod = prod * kernel(axes[j - 1], axes[i - 1])
                    total = total + prod
                return np.broadcast_to(total, (points,) * (2 * n))

            terms.append(_simplex_integral(integrand, t, s, 2 * n, points))
    else:
        c = float(kernel)
        sup = abs(c)
        for n in range(1, n_max + 1):
            terms.append(catalan(n) * c ** n * tau ** (2 * n) / math.factorial(2 * n))
    bound = (2 * tau) ** (2 * (n_max + 1)) * sup ** (n_max + 1) / math.factorial(2 * n_max + 2)
    return NCSeriesResult(value=1.0 + sum(terms), truncation_bound=bound, terms=tuple(terms))


def beta_zero_solution(z, K0, s, t):
    """Closed forms of the free problem (``nu = 0``, ``f' = z``), ``s >= t``.

    Returns ``(R(s,t), C(s,t), K(s))``.
    """
    if not z > 0:
        raise ValueError("z must be > 0")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < t):
        raise ValueError("need s >= t")

    def K(u):
        return 1.0 / (2 * z) + (K0 - 1.0 / (2 * z)) * np.exp(-2 * z * u)

    R = np.exp(-z * (s - t))
    return R, R * K(t), K(s)


# ---------------------------------------------------------------------------
# Monte-Carlo check of the covariance kernel


@dataclass
class KernelCheckReport:
    N: int
    n_samples: int
    empirical: np.ndarray
    expected: np.ndarray
    stderr: np.ndarray
    z_scores: np.ndarray = field(repr=False)

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z_scores)))

    def passes(self, n_sigma=5.0):
        return self.max_abs_z <= n_sigma

    def table(self):
        lines = ["  i  j      empirical       expected         stderr        z"]
        N = self.N
        for i in range(N):
            for j in range(N):
                lines.append(f"{i:3d}{j:3d} {self.empirical[i, j]:14.6e} {self.expected[i, j]:14.6e}"
                             f" {self.stderr[i, j]:14.6e} {self.z_scores[i, j]:8.3f}")
        return "\n".join(lines)


def kernel_mc_check(model: ModelSpec, x, y, n_samples, seed=0, batch=50_000):
    """Average ``G^i(x) G^j(y)`` over fresh disorder draws and compare with the kernel."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    N = x.shape[0]
    if model.disorder_mode == EXACT and max(model.orders()) > 3:
        raise DomainError("exact kernel check needs p <= 3")
    draw = symmetric_gaussian if model.disorder_mode == EXACT else decoupled_gaussian
    rng = np.random.default_rng(seed)
    s1 = np.zeros((N, N))
    s2 = np.zeros((N, N))
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        couplings = {p: draw(rng, N, p, batch=(b,)) for p in model.orders()}
        Gx = field_from_couplings(model.a, model.beta, couplings, x)
        Gy = field_from_couplings(model.a, model.beta, couplings, y)
        prod = Gx[:, :, None] * Gy[:, None, :]
        s1 += prod.sum(axis=0)
        s2 += (prod ** 2).sum(axis=0)
        done += b
    mean = s1 / n_samples
    var = (s2 / n_samples - mean ** 2) * n_samples / (n_samples - 1)
    stderr = np.sqrt(var / n_samples)
    expected = covariance_matrix(model, x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(stderr > 0, (mean - expected) / stderr, 0.0)
    return KernelCheckReport(N=N, n_samples=n_samples, empirical=mean, expected=expected,
                             stderr=stderr, z_scores=zs)
