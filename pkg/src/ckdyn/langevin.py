"""Euler-Maruyama integration of the N-dimensional Langevin system.

    dx_t = [G(x_t) - f'(|x_t|^2/N) x_t] dt + dB_t

The Brownian path ``B`` is pure bookkeeping: each step draws one vector of
increments and adds it to both ``x`` and ``B``, so that the integrated
response ``chi_N(s, t) = x_s . B_t / N`` correlates the state with the noise
that actually drove it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BlowUpError, ConfigError, GridMismatchError
from .model import DisorderTensor, ModelSpec, f_prime, grad_field, sample_disorder

INIT_KINDS = ("uniform-sphere", "iid-gaussian")


@dataclass(frozen=True)
class SimConfig:
    T: float
    dt: float = 1e-3
    snapshot_stride: int = 50
    n_realizations: int = 1
    base_seed: int = 0
    init: str = "uniform-sphere"
    init_variance: float = 1.0
    blowup_threshold: float | None = None
    record_fields: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.T > 0:
            raise ConfigError(f"T must be > 0, got {self.T}")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-8 * max(1.0, self.T / self.dt):
            raise ConfigError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be >= 1")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"unknown initial condition {self.init!r}; expected one of {INIT_KINDS}")
        if self.blowup_threshold is not None and not self.blowup_threshold > 0:
            raise ConfigError("blowup_threshold must be > 0")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def snapshot_spacing(self):
        return self.snapshot_stride * self.dt

    @property
    def n_snapshots(self):
        return self.n_steps // self.snapshot_stride + 1

    def snapshot_times(self):
        return np.arange(self.n_snapshots) * self.snapshot_spacing


def realization_seeds(base_seed, realization_index):
    """Independent ``(disorder, dynamics)`` seed sequences for one realization."""
    root = np.random.SeedSequence(int(base_seed), spawn_key=(int(realization_index),))
    disorder, dynamics = root.spawn(2)
    return disorder, dynamics


@dataclass(eq=False)
class TrajectoryState:
    x: np.ndarray
    B: np.ndarray
    t: float
    rng: np.random.Generator

    @property
    def K(self):
        return float(self.x @ self.x) / self.x.shape[0]


def init_state(config: SimConfig, N, seed) -> TrajectoryState:
    """Draw ``x_0`` independently of the disorder; the generator then drives the noise."""
    if N < 1:
        raise ConfigError("N must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(N)
    if config.init == "uniform-sphere":
        x = g * (math.sqrt(N) / np.linalg.norm(g))
    else:
        x = g * math.sqrt(config.init_variance)
    return TrajectoryState(x=x, B=np.zeros(N), t=0.0, rng=rng)


def euler_maruyama_step(state, model, J, dt, noise=None, threshold=None):
    """Advance one step; ``noise`` overrides the standard normal draw (test hook)."""
    x = state.x
    N = x.shape[0]
    xi = state.rng.standard_normal(N) if noise is None else np.asarray(noise, dtype=float)
    K = float(x @ x) / N
    drift = grad_field(model, J, x) - f_prime(model.confinement, K) * x
    dB = xi * math.sqrt(dt)
    x_new = x + drift * dt + dB
    t_new = state.t + dt
    if threshold is not None:
        K_new = float(x_new @ x_new) / N
        if not (np.isfinite(K_new) and K_new <= threshold):
            raise BlowUpError(t_new, K_new, threshold)
    return TrajectoryState(x=x_new, B=state.B + dB, t=t_new, rng=state.rng)


@dataclass(eq=False)
class EmpiricalObservables:
    """Two-time observables on the snapshot grid, averaged over realizations.

    ``C_sq`` and ``chi_sq`` hold the realization mean of the squared entries so
    that averages can be merged exactly and error bars recovered.
    """

    times: np.ndarray
    C: np.ndarray
    chi: np.ndarray
    K: np.ndarray
    A: np.ndarray | None = None
    F: np.ndarray | None = None
    n_realizations: int = 1
    C_sq: np.ndarray | None = None
    chi_sq: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.C_sq is None:
            self.C_sq = self.C ** 2
        if self.chi_sq is None:
            self.chi_sq = self.chi ** 2

    def _sample_var(self, mean, sq):
        n = self.n_realizations
        if n < 2:
            return np.zeros_like(mean)
        return np.maximum(sq - mean ** 2, 0.0) * n / (n - 1)

    @property
    def C_var(self):
        """Across-realization sample variance of C_N."""
        return self._sample_var(self.C, self.C_sq)

    @property
    def chi_var(self):
        return self._sample_var(self.chi, self.chi_sq)

    @property
    def C_sem(self):
        return np.sqrt(self.C_var / self.n_realizations)

    @property
    def chi_sem(self):
        return np.sqrt(self.chi_var / self.n_realizations)

    @property
    def has_fields(self):
        return self.A is not None and self.F is not None


def observables_from_snapshots(times, X, Bs, Gs=None, meta=None):
    """C, chi, K (and A, F when the fields ``Gs`` are given) from stored snapshots."""
    N = X.shape[1]
    C = X @ X.T / N
    C = 0.5 * (C + C.T)
    chi = X @ Bs.T / N
    A = F = None
    if Gs is not None:
        A = Gs @ X.T / N
        F = Gs @ Bs.T / N
    return EmpiricalObservables(times=np.asarray(times, dtype=float), C=C, chi=chi,
                                K=np.diag(C).copy(), A=A, F=F, meta=dict(meta or {}))


def run_trajectory(model: ModelSpec, J: DisorderTensor, config: SimConfig, realization_index=0,
                   state=None, noise=None):
    """Integrate one trajectory to ``T`` and measure the snapshot observables.

    ``state`` defaults to the seeded initial condition of this realization;
    ``noise`` (callable ``step -> xi``) replaces the random increments.
    """
    N = model.N
    if state is None:
        _, dyn_seed = realization_seeds(config.base_seed, realization_index)
        state = init_state(config, N, dyn_seed)
    threshold = config.blowup_threshold
    if threshold is None:
        threshold = 50.0 * max(1.0, state.K)
    M = config.n_snapshots
    stride = config.snapshot_stride
    X = np.empty((M, N))
    Bs = np.empty((M, N))
    Gs = np.empty((M, N)) if config.record_fields else None

    def record(k, st):
        X[k] = st.x
        Bs[k] = st.B
        if Gs is not None:
            Gs[k] = grad_field(model, J, st.x)

    record(0, state)
    for step in range(1, (M - 1) * stride + 1):
        xi = None if noise is None else noise(step)
        state = euler_maruyama_step(state, model, J, config.dt, noise=xi, threshold=threshold)
        if step % stride == 0:
            record(step // stride, state)
    meta = {"realization_index": realization_index, "disorder_mode": J.mode}
    return observables_from_snapshots(config.snapshot_times(), X, Bs, Gs, meta=meta)


def average_realizations(observables):
    """Entrywise realization-weighted mean; counts add up."""
    obs = list(observables)
    if not obs:
        raise ValueError("nothing to average")
    times = obs[0].times
    for o in obs[1:]:
        if o.times.shape != times.shape or not np.array_equal(o.times, times):
            raise GridMismatchError("cannot average observables on different snapshot grids")
    w = np.array([o.n_realizations for o in obs], dtype=float)

    def avg(name):
        vals = [getattr(o, name) for o in obs]
        if any(v is None for v in vals):
            return None
        return np.average(np.stack(vals), axis=0, weights=w)

    C = avg("C")
    return EmpiricalObservables(
        times=times.copy(), C=C, chi=avg("chi"), K=np.diag(C).copy(), A=avg("A"), F=avg("F"),
        n_realizations=int(w.sum()), C_sq=avg("C_sq"), chi_sq=avg("chi_sq"),
        meta=dict(obs[0].meta, n_realizations=int(w.sum())),
    )


def simulate(model: ModelSpec, config: SimConfig, n_jobs=1, return_runs=False):
    """Sample disorder and run every realization; returns the averaged observables."""

    def one(k):
        dis_seed, _ = realization_seeds(config.base_seed, k)
        J = sample_disorder(model, dis_seed)
        return run_trajectory(model, J, config, realization_index=k)

    if n_jobs == 1:
        runs = [one(k) for k in range(config.n_realizations)]
    else:
        from joblib import Parallel, delayed

        runs = Parallel(n_jobs=n_jobs)(delayed(one)(k) for k in range(config.n_realizations))
    avg = average_realizations(runs)
    return (avg, runs) if return_runs else avg


def derived_DE(obs: EmpiricalObservables, model: ModelSpec):
    """``D(s,t) = -f'(K(t)) C(s,t) + A(t,s)`` and ``E(s,t) = -f'(K(s)) chi(s,t) + F(s,t)``."""
    if not obs.has_fields:
        raise ValueError("observables were recorded without A/F (set record_fields)")
    fK = f_prime(model.confinement, obs.K)
    D = -fK[None, :] * obs.C + obs.A.T
    E = -fK[:, None] * obs.chi + obs.F
    return D, E


def with_seed(config: SimConfig, base_seed) -> SimConfig:
    return replace(config, base_seed=int(base_seed))
