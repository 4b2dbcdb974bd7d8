"""Simulator-versus-limit comparison and the N / h convergence study."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridMismatchError
from .langevin import EmpiricalObservables, SimConfig, simulate
from .model import ModelSpec
from .solver import CKSolution, SolverConfig, solve_ck


def _grid_view(obj):
    """``(times, C, chi, C_sem, chi_sem)`` as full square arrays."""
    if isinstance(obj, CKSolution):
        z = np.zeros((obj.n, obj.n))
        return obj.times, obj.C.full(), obj.chi.full(), z, z
    if isinstance(obj, EmpiricalObservables):
        return obj.times, obj.C, obj.chi, obj.C_sem, obj.chi_sem
    raise TypeError(f"cannot compare objects of type {type(obj).__name__}")


def _common_indices(ta, tb):
    """Index arrays selecting the shared nodes of two uniform grids starting at 0."""
    step = {}
    for name, t in (("a", ta), ("b", tb)):
        step[name] = t[1] - t[0] if len(t) > 1 else None
    if step["a"] is None or step["b"] is None:
        if abs(ta[0] - tb[0]) > 1e-12:
            raise GridMismatchError("grids do not overlap")
        return np.array([0]), np.array([0])
    if abs(ta[0]) > 1e-12 or abs(tb[0]) > 1e-12:
        raise GridMismatchError("grids must start at t = 0")
    coarse, fine = (step["a"], step["b"]) if step["a"] >= step["b"] else (step["b"], step["a"])
    ratio = coarse / fine
    r = int(round(ratio))
    if abs(ratio - r) > 1e-6 * ratio:
        raise GridMismatchError(f"grid steps {coarse:g} and {fine:g} are not commensurate")
    t_end = min(ta[-1], tb[-1])
    count = int(np.floor(t_end / coarse + 1e-9)) + 1
    base = np.arange(count)
    if step["a"] >= step["b"]:
        return base, base * r
    return base * r, base


@dataclass
class ComparisonReport:
    times: np.ndarray
    sup_C: float
    sup_chi: float
    rms_C: float
    rms_chi: float
    diff_C: np.ndarray = field(repr=False)
    diff_chi: np.ndarray = field(repr=False)
    max_sem_C: float = 0.0
    max_sem_chi: float = 0.0
    tol: float | None = None

    @property
    def sup(self):
        return max(self.sup_C, self.sup_chi)

    @property
    def passed(self):
        return self.tol is not None and self.sup <= self.tol

    def summary(self):
        lines = [
            f"common grid: {len(self.times)} times on [0, {self.times[-1]:g}]",
            f"C   : sup {self.sup_C:.6f}  rms {self.rms_C:.6f}  max s.e.m. {self.max_sem_C:.6f}",
            f"chi : sup {self.sup_chi:.6f}  rms {self.rms_chi:.6f}  max s.e.m. {self.max_sem_chi:.6f}",
        ]
        if self.tol is not None:
            lines.append(f"tol {self.tol:g}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def difference_table(self):
        """Rows ``(s, t, C diff, chi diff)`` over the lower triangle."""
        rows = []
        t = self.times
        for i in range(len(t)):
            for j in range(i + 1):
                rows.append((t[i], t[j], self.diff_C[i, j], self.diff_chi[i, j]))
        return rows


def compare_grids(first, second, tol=None) -> ComparisonReport:
    """Sup and RMS of ``first - second`` for C and chi over the shared triangle ``t <= s``."""
    ta, Ca, xa, sCa, sxa = _grid_view(first)
    tb, Cb, xb, sCb, sxb = _grid_view(second)
    ia, ib = _common_indices(ta, tb)
    sa = np.ix_(ia, ia)
    sb = np.ix_(ib, ib)
    dC = Ca[sa] - Cb[sb]
    dx = xa[sa] - xb[sb]
    tri = np.tril(np.ones(dC.shape, dtype=bool))
    semC = np.sqrt(sCa[sa] ** 2 + sCb[sb] ** 2)
    semx = np.sqrt(sxa[sa] ** 2 + sxb[sb] ** 2)
    return ComparisonReport(
        times=ta[ia], sup_C=float(np.max(np.abs(dC[tri]))), sup_chi=float(np.max(np.abs(dx[tri]))),
        rms_C=float(np.sqrt(np.mean(dC[tri] ** 2))), rms_chi=float(np.sqrt(np.mean(dx[tri] ** 2))),
        diff_C=np.tril(dC), diff_chi=np.tril(dx),
        max_sem_C=float(np.max(semC[tri])), max_sem_chi=float(np.max(semx[tri])), tol=tol,
    )


def long_format_rows(first, second, quantity, labels=("empirical", "limit")):
    """``(s, t, value, source)`` rows of one quantity from both inputs on the shared grid."""
    ta, Ca, xa, _, _ = _grid_view(first)
    tb, Cb, xb, _, _ = _grid_view(second)
    ia, ib = _common_indices(ta, tb)
    pick = {"C": (Ca, Cb), "chi": (xa, xb)}[quantity]
    t = ta[ia]
    for arr, idx, label in ((pick[0], ia, labels[0]), (pick[1], ib, labels[1])):
        sub = arr[np.ix_(idx, idx)]
        for i in range(len(t)):
            for j in range(i + 1):
                yield t[i], t[j], sub[i, j], label


@dataclass
class ConvergenceStudy:
    N_list: list
    h_list: list
    sup: np.ndarray  # [iN, ih] max of the C and chi sup-differences
    sup_C: np.ndarray
    sup_chi: np.ndarray
    rms: np.ndarray  # [iN, ih] max of the C and chi RMS differences
    sem: np.ndarray  # [iN] largest standard error of the mean of C_N or chi_N on the grid
    variance: np.ndarray  # across-realization variance of C_N at `point`, per N
    point: tuple

    def table(self):
        """Rows per N: ``sup / rms`` for every h, then the variance of C_N."""
        head = "N \\ h " + "".join(f"{h:>20g}" for h in self.h_list) + f"{'max s.e.m.':>12}{'var C_N':>14}"
        lines = [head]
        for a, N in enumerate(self.N_list):
            cells = "".join(f"{s:10.5f} /{r:8.5f}" for s, r in zip(self.sup[a], self.rms[a]))
            lines.append(f"{N:<6d}" + cells + f"{self.sem[a]:12.5f}{self.variance[a]:14.4e}")
        return "\n".join(lines)


def convergence_study(model: ModelSpec, sim_config: SimConfig, solver_config: SolverConfig,
                      N_list, h_list, point=(1.0, 0.5), n_jobs=1):
    """Simulator-vs-solver sup differences over an (N, h) matrix.

    ``variance[a]`` is the across-realization variance of ``C_N`` at the
    snapshot nearest to ``point``; it should shrink with N.  With tens of
    realizations the differences are mostly statistical, so read them
    against ``sem``, the largest standard error on the grid at that N.
    """
    sols = [solve_ck(model, replace(solver_config, h=h)) for h in h_list]
    nN, nh = len(N_list), len(h_list)
    sup = np.zeros((nN, nh))
    supC = np.zeros((nN, nh))
    supx = np.zeros((nN, nh))
    rms = np.zeros((nN, nh))
    sem = np.zeros(nN)
    var = np.zeros(nN)
    times = sim_config.snapshot_times()
    i = int(np.argmin(np.abs(times - point[0])))
    j = int(np.argmin(np.abs(times - point[1])))
    for a, N in enumerate(N_list):
        obs = simulate(replace(model, N=int(N)), sim_config, n_jobs=n_jobs)
        var[a] = obs.C_var[i, j]
        for b, sol in enumerate(sols):
            rep = compare_grids(obs, sol)
            supC[a, b], supx[a, b], sup[a, b] = rep.sup_C, rep.sup_chi, rep.sup
            rms[a, b] = max(rep.rms_C, rep.rms_chi)
            sem[a] = max(rep.max_sem_C, rep.max_sem_chi)
    return ConvergenceStudy(N_list=list(N_list), h_list=list(h_list), sup=sup, sup_C=supC,
                            sup_chi=supx, rms=rms, sem=sem, variance=var, point=(times[i], times[j]))
