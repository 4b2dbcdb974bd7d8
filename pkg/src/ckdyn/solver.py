"""Causal two-time solver for the limiting correlation/response equations.

For ``s > t`` (``nu`` already carries ``beta**2``)::

    d_s R(s,t) = -f'(K(s)) R(s,t) + int_t^s R(u,t) R(s,u) nu''(C(s,u)) du
    d_s C(s,t) = -f'(K(s)) C(s,t) + int_0^s C(u,t) R(s,u) nu''(C(s,u)) du
                                  + int_0^t nu'(C(s,u)) R(t,u) du
    d_s K(s)   = -2 f'(K(s)) K(s) + 1 + 2 int_0^s psi(C(s,u)) R(s,u) du

with ``R(s,s) = 1``, ``R(s,t) = 0`` for ``t > s``, ``C(s,s) = K(s)``.  In hard
mode ``f'(K(s))`` becomes the multiplier ``z(s)`` fixed by ``K = 1``.

Rows are built one at a time: an explicit Euler predictor from the previous
row, then trapezoidal corrector sweeps (trapezoid in ``s`` and in every
memory integral) iterated to a fixed point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError
from .model import ModelSpec, f_prime, nu_eval

SOFT = "soft"
HARD = "hard"


@dataclass(eq=False)
class TriGrid:
    """Lower-triangular two-time array ``v[i, j]``, ``i >= j``, on ``t_k = k h``.

    ``upper`` is the read convention for ``j > i`` chosen by the owner:
    ``"zero"``, ``"mirror"`` (``v[j, i]``) or ``"hold"`` (``v[i, i]``).
    """

    h: float
    values: np.ndarray
    upper: str = "zero"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid step must be > 0")
        if self.upper not in ("zero", "mirror", "hold"):
            raise ValueError(f"unknown off-triangle convention {self.upper!r}")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def times(self):
        return np.arange(self.n) * self.h

    def __getitem__(self, ij):
        i, j = ij
        if j <= i:
            return self.values[i, j]
        if self.upper == "zero":
            return 0.0
        if self.upper == "mirror":
            return self.values[j, i]
        return self.values[i, i]

    def full(self):
        """Square array with the off-triangle convention applied."""
        v = np.tril(self.values)
        if self.upper == "mirror":
            return v + np.tril(self.values, -1).T
        if self.upper == "hold":
            d = np.diag(self.values)
            return v + np.triu(np.broadcast_to(d[:, None], v.shape), 1)
        return v


@dataclass(frozen=True)
class SolverConfig:
    h: float
    T: float
    K0: float = 1.0
    corrector_tol: float = 1e-10
    corrector_max_iter: int = 50
    mode: str = SOFT

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"h must be > 0, got {self.h}")
        if not self.T >= self.h:
            raise ConfigError("T must be >= h")
        if abs(self.T / self.h - round(self.T / self.h)) > 1e-8 * max(1.0, self.T / self.h):
            raise ConfigError(f"T={self.T} is not an integer multiple of h={self.h}")
        if self.mode not in (SOFT, HARD):
            raise ConfigError(f"unknown solver mode {self.mode!r}")
        if self.mode == SOFT and not self.K0 > 0:
            raise ConfigError("K0 must be > 0")

    @property
    def n(self):
        return int(round(self.T / self.h)) + 1


@dataclass(eq=False)
class CKSolution:
    h: float
    R: TriGrid
    C: TriGrid
    K: np.ndarray
    chi: TriGrid
    mode: str = SOFT
    zlag: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def times(self):
        return np.arange(self.n) * self.h

    def fprime_path(self, model: ModelSpec):
        """The confinement rate ``f'(K(s))`` (soft) or ``z(s)`` (hard) along the grid."""
        if self.mode == HARD:
            return self.zlag
        return f_prime(model.confinement, self.K)


def _trap_tail(values, h):
    """Trapezoid over nodes ``0..k`` of ``values`` (length k+1)."""
    if values.shape[0] < 2:
        return 0.0
    return h * (values.sum() - 0.5 * (values[0] + values[-1]))


def solve_ck(model: ModelSpec, config: SolverConfig) -> CKSolution:
    nu = model.nu
    h = config.h
    n = config.n
    hard = config.mode == HARD
    conf = model.confinement
    R = np.zeros((n, n))
    C = np.zeros((n, n))
    K = np.zeros(n)
    zlag = np.zeros(n) if hard else None
    sweeps = np.zeros(n, dtype=int)
    final_delta = np.zeros(n)

    def rhs(i):
        Ri = R[i, : i + 1]
        Ci = C[i, : i + 1]
        Rblk = R[: i + 1, : i + 1]
        Cblk = C[: i + 1, : i + 1]
        dR = np.diag(Rblk)
        mem_K = _trap_tail(nu.psi(Ci) * Ri, h)
        if hard:
            fk = 0.5 * (1.0 + 2.0 * mem_K)
            FK = 0.0
        else:
            fk = float(f_prime(conf, K[i]))
            FK = -2.0 * fk * K[i] + 1.0 + 2.0 * mem_K
        v = Ri * nu_eval(nu, Ci, 2)
        # int_{t_j}^{s_i} R(u,j) v_u du  (R(u,j) = 0 for u < j)
        IR = h * (v @ Rblk - 0.5 * v * dR - 0.5 * v[i] * Ri)
        # int_0^{s_i} C(u,j) v_u du
        I1 = h * (v @ Cblk - 0.5 * v[0] * Cblk[0] - 0.5 * v[i] * Ci)
        # int_0^{t_j} nu'(C(s_i,u)) R(j,u) du
        w = nu_eval(nu, Ci, 1)
        I2 = h * (Rblk @ w - 0.5 * Rblk[:, 0] * w[0] - 0.5 * dR * w)
        FR = -fk * Ri + IR
        FC = -fk * Ci + I1 + I2
        return FR, FC, FK, fk

    R[0, 0] = 1.0
    K[0] = 1.0 if hard else config.K0
    C[0, 0] = K[0]
    FR_p, FC_p, FK_p, fk0 = rhs(0)
    if hard:
        zlag[0] = fk0

    for i in range(1, n):
        # predictor: explicit Euler from row i-1
        R[i, :i] = R[i - 1, :i] + h * FR_p
        C[i, :i] = C[i - 1, :i] + h * FC_p
        K[i] = 1.0 if hard else K[i - 1] + h * FK_p
        R[i, i] = 1.0
        C[i, i] = K[i]
        C[:i, i] = C[i, :i]
        delta = math.inf
        for it in range(1, config.corrector_max_iter + 1):
            FR, FC, FK, _ = rhs(i)
            newR = R[i - 1, :i] + 0.5 * h * (FR_p + FR[:i])
            newC = C[i - 1, :i] + 0.5 * h * (FC_p + FC[:i])
            newK = 1.0 if hard else K[i - 1] + 0.5 * h * (FK_p + FK)
            delta = max(np.max(np.abs(newR - R[i, :i])), np.max(np.abs(newC - C[i, :i])),
                        abs(newK - K[i]))
            R[i, :i] = newR
            C[i, :i] = newC
            K[i] = newK
            C[i, i] = newK
            C[:i, i] = newC
            if not np.isfinite(delta):
                raise DomainError(f"non-finite values on row {i} (t = {i * h:.6g})")
            if delta < config.corrector_tol:
                break
        else:
            raise ConvergenceError(i, delta, config.corrector_max_iter)
        sweeps[i] = it
        final_delta[i] = delta
        FR_p, FC_p, FK_p, fk = rhs(i)
        if hard:
            zlag[i] = fk

    Rg = TriGrid(h, R, upper="zero")
    sol = CKSolution(
        h=h, R=Rg, C=TriGrid(h, C, upper="mirror"), K=K,
        chi=TriGrid(h, np.zeros((n, n)), upper="hold"), mode=config.mode, zlag=zlag,
        diagnostics={"sweeps": sweeps, "max_sweeps": int(sweeps.max()), "total_sweeps": int(sweeps.sum()),
                     "max_final_delta": float(final_delta.max())},
    )
    sol.chi = chi_from_R(sol)
    return sol


def chi_from_R(sol: CKSolution) -> TriGrid:
    """``chi(s,t) = int_0^t R(s,u) du`` (trapezoid), frozen at ``chi(s,s)`` for ``t >= s``."""
    R = np.tril(sol.R.values)
    h = sol.h
    cs = np.cumsum(R, axis=1)
    chi = h * (cs - 0.5 * R[:, :1] - 0.5 * R)
    chi[:, 0] = 0.0
    return TriGrid(h, np.tril(chi), upper="hold")


def response_H(sol: CKSolution, model: ModelSpec):
    """``H(s,t) = R(s,t) exp(int_t^s f'(K(u)) du)`` on the lower triangle."""
    rate = sol.fprime_path(model)
    F = _cumtrapz(rate, sol.h, axis=0)
    H = np.tril(sol.R.values * np.exp(F[:, None] - F[None, :]))
    return H


# ---------------------------------------------------------------------------
# Residuals of the integral system


def _cumtrapz(y, h, axis=-1):
    y = np.moveaxis(np.asarray(y, dtype=float), axis, -1)
    out = np.zeros_like(y)
    out[..., 1:] = np.cumsum(0.5 * h * (y[..., 1:] + y[..., :-1]), axis=-1)
    return np.moveaxis(out, -1, axis)


def _trap_weights(n):
    """``W[s, u]``: trapezoid weights (in units of h) for ``int_0^{t_s} du``."""
    W = np.tril(np.ones((n, n)))
    W[:, 0] = 0.5
    W[np.arange(n), np.arange(n)] = 0.5
    W[0, 0] = 0.0
    return W


@dataclass
class ResidualReport:
    eqC1: float
    eq_chi: float
    eqD: float
    eqE: float
    boundary_E0: float
    boundary_Ediag: float
    h: float
    D: np.ndarray = field(repr=False, default=None)
    E: np.ndarray = field(repr=False, default=None)

    def sup_norms(self):
        return {"eqC1": self.eqC1, "eq_chi": self.eq_chi, "eqD": self.eqD, "eqE": self.eqE}


def reconstruct_DE(sol: CKSolution, model: ModelSpec):
    """Rebuild ``D = d_2 (C - chi)`` and ``E`` from ``(R, C, K)`` on ``[0,T]^2``.

    D(s,t) = -f'(K(t)) C(t,s) + int_0^s nu'(C(t,u)) R(s,u) du
             + int_0^t C(s,u) nu''(C(t,u)) R(t,u) du
    E(s,t) = -f'(K(s)) chi(s,t) + int_0^s chi(u,t) nu''(C(s,u)) R(s,u) du
    """
    nu = model.nu
    h = sol.h
    R = sol.R.full()
    C = sol.C.full()
    chi = sol.chi.full()
    fk = sol.fprime_path(model)
    nu1 = nu_eval(nu, C, 1)
    P = nu_eval(nu, C, 2) * R
    X1 = h * (R @ nu1.T - 0.5 * np.outer(R[:, 0], nu1[:, 0]) - 0.5 * nu1.T)
    X2 = h * (C @ P.T - 0.5 * np.outer(C[:, 0], P[:, 0]) - 0.5 * C * np.diag(P)[None, :])
    D = -fk[None, :] * C.T + X1 + X2
    Y = h * (P @ chi - 0.5 * np.outer(P[:, 0], chi[0]) - 0.5 * np.diag(P)[:, None] * chi)
    E = -fk[:, None] * chi + Y
    return D, E


def residual_integral_system(sol: CKSolution, model: ModelSpec, D=None, E=None) -> ResidualReport:
    """Sup-norm residuals of the four integral equations for ``(C, chi, D, E)``.

    ``D`` and ``E`` default to :func:`reconstruct_DE`.
    """
    nu = model.nu
    h = sol.h
    n = sol.n
    if D is None or E is None:
        D, E = reconstruct_DE(sol, model)
    C = sol.C.full()
    chi = sol.chi.full()
    fk = sol.fprime_path(model)
    nu1 = nu_eval(nu, C, 1)
    nu2 = nu_eval(nu, C, 2)
    t = sol.times
    idx = np.arange(n)
    W = _trap_weights(n)

    res_C1 = C - C[:, :1] - chi - _cumtrapz(D, h, axis=1)
    res_chi = chi - np.minimum.outer(t, t) - _cumtrapz(E, h, axis=0)

    # eqD; integrals run to max(s, t)
    res_D = np.empty((n, n))
    for s in range(n):
        top = np.maximum(s, idx)
        I1 = _cumtrapz(nu1 * D[s][None, :], h, axis=1)[idx, top]
        I2 = _cumtrapz(C[s][None, :] * nu2 * D, h, axis=1)[idx, top]
        boundary = C[s, top] * nu1[top, idx] - C[s, 0] * nu1[0, idx]
        res_D[s] = D[s] + fk * C[:, s] + I1 + I2 - boundary

    Ia = h * ((W * nu1) @ E)
    Ib = h * ((W * nu2 * D) @ chi)
    Ic = _cumtrapz(nu1, h, axis=1)[idx[:, None], np.minimum.outer(idx, idx)]
    res_E = E + fk[:, None] * chi + Ia + Ib - chi * np.diag(nu1)[:, None] + Ic

    upper = np.triu(np.ones((n, n), dtype=bool))
    Ediag = np.abs(E - np.diag(E)[:, None])[upper]
    return ResidualReport(
        eqC1=float(np.max(np.abs(res_C1))), eq_chi=float(np.max(np.abs(res_chi))),
        eqD=float(np.max(np.abs(res_D))), eqE=float(np.max(np.abs(res_E))),
        boundary_E0=float(np.max(np.abs(E[:, 0]))), boundary_Ediag=float(np.max(Ediag)),
        h=h, D=D, E=E,
    )


# ---------------------------------------------------------------------------
# Grid refinement


@dataclass
class RefinementTable:
    hs: list
    differences: list  # sup-norm between successive levels on the coarsest grid
    orders: list

    def rows(self):
        out = []
        for k, d in enumerate(self.differences):
            order = self.orders[k - 1] if k >= 1 else float("nan")
            out.append((self.hs[k], self.hs[k + 1], d, order))
        return out


def restrict(sol: CKSolution, n_coarse, factor):
    sl = slice(0, (n_coarse - 1) * factor + 1, factor)
    return {
        "R": sol.R.full()[sl, sl],
        "C": sol.C.full()[sl, sl],
        "K": sol.K[sl],
        "chi": sol.chi.full()[sl, sl],
    }


def _sup_diff(a, b):
    return max(float(np.max(np.abs(a[k] - b[k]))) for k in a)


def grid_refine_compare(model: ModelSpec, config: SolverConfig, levels=3):
    """Solve at ``h, h/2, h/4, ...`` and tabulate successive differences on the coarse grid."""
    if levels < 2:
        return RefinementTable(hs=[config.h], differences=[], orders=[])

    n0 = config.n
    restricted = []
    hs = []
    for k in range(levels):
        cfg = replace(config, h=config.h / 2 ** k)
        sol = solve_ck(model, cfg)
        hs.append(cfg.h)
        restricted.append(restrict(sol, n0, 2 ** k))
    diffs = [_sup_diff(restricted[k], restricted[k + 1]) for k in range(levels - 1)]
    orders = [math.log2(diffs[k] / diffs[k + 1]) if diffs[k + 1] > 0 else float("inf")
              for k in range(len(diffs) - 1)]
    return RefinementTable(hs=hs, differences=diffs, orders=orders)
