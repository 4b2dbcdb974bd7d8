"""Configuration files, CSV grids and run manifests.

Config and manifest share one format: ``key = value`` lines with ``#``
comments.  A manifest is the fully resolved config of a run plus
``manifest.*`` bookkeeping keys, so it can be fed back as ``--config`` to
reproduce the run.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .langevin import EmpiricalObservables, SimConfig
from .model import ConfinementSpec, ModelSpec
from .solver import CKSolution, SolverConfig, TriGrid

MODEL_KEYS = {"m", "beta", "N", "confinement.kind", "kappa", "r", "z", "disorder.mode", "seed"}
SIM_KEYS = {"dt", "T", "snapshot_stride", "realizations", "init", "init.variance",
            "blowup_threshold", "record_fields"}
SOLVER_KEYS = {"h", "K0", "corrector_tol", "corrector_max_iter", "mode"}
MANIFEST_PREFIX = "manifest."


def parse_config_text(text):
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        cfg[key] = value
    _check_keys(cfg)
    return cfg


def _check_keys(cfg):
    known = MODEL_KEYS | SIM_KEYS | SOLVER_KEYS
    for key in cfg:
        if key.startswith(MANIFEST_PREFIX) or key in known:
            continue
        if key.startswith("a_") and key[2:].isdigit():
            continue
        raise ConfigError(f"unknown config key {key!r}")


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _get(cfg, key, conv, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default
    try:
        return conv(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def model_from_config(cfg):
    m = _get(cfg, "m", _int)
    a = tuple(_get(cfg, f"a_{p}", float, 0.0) for p in range(1, m + 1))
    kind = cfg.get("confinement.kind", "polynomial")
    if kind == "constant-fprime":
        conf = ConfinementSpec.constant(_get(cfg, "z", float))
    else:
        conf = ConfinementSpec(kind=kind, kappa=_get(cfg, "kappa", float, 5.0), r=_get(cfg, "r", _int, 2))
    return ModelSpec(a=a, beta=_get(cfg, "beta", float, 1.0), confinement=conf,
                     N=_get(cfg, "N", _int, 1), disorder_mode=cfg.get("disorder.mode", "exact"))


def sim_config_from_config(cfg):
    threshold = cfg.get("blowup_threshold")
    return SimConfig(
        T=_get(cfg, "T", float),
        dt=_get(cfg, "dt", float, 1e-3),
        snapshot_stride=_get(cfg, "snapshot_stride", _int, 50),
        n_realizations=_get(cfg, "realizations", _int, 1),
        base_seed=_get(cfg, "seed", _int, 0),
        init=cfg.get("init", "uniform-sphere"),
        init_variance=_get(cfg, "init.variance", float, 1.0),
        blowup_threshold=None if threshold in (None, "none", "") else float(threshold),
        record_fields=_get(cfg, "record_fields", _bool, False),
    )


def solver_config_from_config(cfg):
    return SolverConfig(
        h=_get(cfg, "h", float),
        T=_get(cfg, "T", float),
        K0=_get(cfg, "K0", float, 1.0),
        corrector_tol=_get(cfg, "corrector_tol", float, 1e-10),
        corrector_max_iter=_get(cfg, "corrector_max_iter", _int, 50),
        mode=cfg.get("mode", "soft"),
    )


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def model_to_config(spec: ModelSpec):
    cfg = {"m": spec.m}
    for p, ap in enumerate(spec.a, start=1):
        cfg[f"a_{p}"] = ap
    cfg["beta"] = spec.beta
    cfg["N"] = spec.N
    conf = spec.confinement
    cfg["confinement.kind"] = conf.kind
    if conf.kind == "constant-fprime":
        cfg["z"] = conf.z
    else:
        cfg["kappa"] = conf.kappa
        cfg["r"] = conf.r
    cfg["disorder.mode"] = spec.disorder_mode
    return cfg


def sim_config_to_config(sc: SimConfig):
    return {
        "T": sc.T, "dt": sc.dt, "snapshot_stride": sc.snapshot_stride,
        "realizations": sc.n_realizations, "seed": sc.base_seed, "init": sc.init,
        "init.variance": sc.init_variance,
        "blowup_threshold": "none" if sc.blowup_threshold is None else sc.blowup_threshold,
        "record_fields": str(sc.record_fields).lower(),
    }


def solver_config_to_config(sc: SolverConfig):
    return {"T": sc.T, "h": sc.h, "K0": sc.K0, "corrector_tol": sc.corrector_tol,
            "corrector_max_iter": sc.corrector_max_iter, "mode": sc.mode}


def format_config(cfg):
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.items())


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def grid_csv_text(times, values):
    """Header row of grid times, then the rows of ``values`` (17 significant digits)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = [",".join(format(float(t), ".17g") for t in times)]
    for row in values:
        lines.append(",".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def write_grid_csv(path, times, values):
    atomic_write_text(path, grid_csv_text(times, values))


def read_grid_csv(path):
    """Return ``(times, values)`` with ``values`` always two-dimensional."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    times = np.array([float(v) for v in lines[0].split(",")])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if values.ndim != 2 or values.shape[1] != times.shape[0]:
        raise ConfigError(f"{path}: malformed grid CSV")
    return times, values


def write_manifest(path, cfg, extra):
    body = dict(cfg)
    body[f"{MANIFEST_PREFIX}version"] = __version__
    for k, v in extra.items():
        body[f"{MANIFEST_PREFIX}{k}"] = v
    atomic_write_text(path, format_config(body))


def read_manifest(path):
    return parse_config_text(Path(path).read_text())


def write_empirical(outdir, obs: EmpiricalObservables, model, sim_config, wall_time=None):
    outdir = Path(outdir)
    t = obs.times
    files = {"C": obs.C, "chi": obs.chi, "K": obs.K, "C_var": obs.C_var, "chi_var": obs.chi_var}
    if obs.has_fields:
        files.update(A=obs.A, F=obs.F)
    for name, arr in files.items():
        write_grid_csv(outdir / f"{name}.csv", t, arr)
    cfg = {**model_to_config(model), **sim_config_to_config(sim_config)}
    extra = {"kind": "simulate", "n_realizations": obs.n_realizations,
             "disorder_mode": model.disorder_mode,
             "outputs": ",".join(f"{name}.csv" for name in files)}
    if wall_time is not None:
        extra["wall_time"] = f"{wall_time:.3f}"
    write_manifest(outdir / "manifest.txt", cfg, extra)


def read_empirical(outdir):
    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.txt")
    n = int(manifest.get("manifest.n_realizations", "1"))
    times, C = read_grid_csv(outdir / "C.csv")
    _, chi = read_grid_csv(outdir / "chi.csv")
    C_var = read_grid_csv(outdir / "C_var.csv")[1] if (outdir / "C_var.csv").exists() else np.zeros_like(C)
    chi_var = read_grid_csv(outdir / "chi_var.csv")[1] if (outdir / "chi_var.csv").exists() else np.zeros_like(chi)
    A = read_grid_csv(outdir / "A.csv")[1] if (outdir / "A.csv").exists() else None
    F = read_grid_csv(outdir / "F.csv")[1] if (outdir / "F.csv").exists() else None
    shrink = (n - 1) / n if n > 1 else 0.0
    return EmpiricalObservables(
        times=times, C=C, chi=chi, K=np.diag(C).copy(), A=A, F=F, n_realizations=n,
        C_sq=C ** 2 + C_var * shrink, chi_sq=chi ** 2 + chi_var * shrink, meta={"manifest": manifest},
    )


def write_solution(outdir, sol: CKSolution, model, solver_config, wall_time=None):
    outdir = Path(outdir)
    t = sol.times
    files = {"R": sol.R.full(), "C": sol.C.full(), "K": sol.K, "chi": sol.chi.full()}
    if sol.zlag is not None:
        files["z"] = sol.zlag
    for name, arr in files.items():
        write_grid_csv(outdir / f"{name}.csv", t, arr)
    cfg = {**model_to_config(model), **solver_config_to_config(solver_config)}
    diag = sol.diagnostics
    extra = {"kind": "solve", "max_sweeps": diag.get("max_sweeps"),
             "total_sweeps": diag.get("total_sweeps"),
             "outputs": ",".join(f"{name}.csv" for name in files)}
    if wall_time is not None:
        extra["wall_time"] = f"{wall_time:.3f}"
    write_manifest(outdir / "manifest.txt", cfg, extra)


def read_solution(outdir):
    outdir = Path(outdir)
    manifest = read_manifest(outdir / "manifest.txt")
    times, R = read_grid_csv(outdir / "R.csv")
    _, C = read_grid_csv(outdir / "C.csv")
    _, chi = read_grid_csv(outdir / "chi.csv")
    K = read_grid_csv(outdir / "K.csv")[1][0]
    h = float(manifest["h"]) if "h" in manifest else float(times[1] - times[0])
    zlag = read_grid_csv(outdir / "z.csv")[1][0] if (outdir / "z.csv").exists() else None
    return CKSolution(h=h, R=TriGrid(h, np.tril(R), "zero"), C=TriGrid(h, np.tril(C), "mirror"), K=K,
                      chi=TriGrid(h, np.tril(chi), "hold"), mode=manifest.get("mode", "soft"), zlag=zlag,
                      diagnostics={"manifest": manifest})


def write_long_format(path, rows):
    """Plot-ready long table; ``rows`` yields ``(s, t, value, source)``."""
    lines = ["s,t,value,source"]
    for s, t, v, src in rows:
        lines.append(f"{format(float(s), '.17g')},{format(float(t), '.17g')},{format(float(v), '.17g')},{src}")
    atomic_write_text(path, "\n".join(lines) + "\n")
