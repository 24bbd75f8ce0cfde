"""Replica orchestration and artifact writing for ``specflow run``.

Replicas are independent: replica ``r`` draws from streams keyed by
``(seed, r, tag)``.  Workers only compute; the parent process writes every
file in replica order, so output bytes never depend on scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig
from .equations import density_equation_residual, limit_equation_residual
from .matrix import EigenConvergenceError, eigenvalues, sample_symmetric_brownian, sample_wishart
from .measures import EmpiricalMeasure, ks_distance, ks_two_sample, write_stieltjes_csv
from .particles import ParticleTrajectory, jittered_start, simulate
from .rng import make_stream, split_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# products that need every replica alive at t_end
NEEDS_ALIVE = ("measure", "ks", "cross_check")
NEEDS_LAW = ("ks", "hilbert_check")
CROSS_CHECK_MODELS = ("dyson", "wishart")
# interior band excluded from density residuals, in grid cells
EDGE_CELLS = 5


@dataclass
class ReplicaResult:
    index: int
    trajectory: ParticleTrajectory
    matrix_eigenvalues: np.ndarray | None = None


def check_compatible(cfg: ExperimentConfig) -> None:
    model = cfg.build_model()
    for prod in NEEDS_LAW:
        if prod in cfg.outputs and model.limit_law_hint is None:
            raise ConfigError(f"{prod} needs a model with a known limit law")
    timed = [p for p in ("ks", "hilbert_check", "cross_check") if p in cfg.outputs]
    if timed and cfg.t_end <= 0:
        raise ConfigError(f"{', '.join(timed)} need t_end > 0")
    if "cross_check" in cfg.outputs and cfg.model not in CROSS_CHECK_MODELS:
        raise ConfigError(f"cross_check supports {CROSS_CHECK_MODELS}, not {cfg.model!r}")
    if "hilbert_check" in cfg.outputs:
        lim = model.limits
        if lim is None or lim.g2_limit is None or lim.self_similar_exponent is None:
            raise ConfigError("hilbert_check needs the g2/h2 split and a self-similarity exponent")


def run_replica(cfg: ExperimentConfig, r: int) -> ReplicaResult:
    model = cfg.build_model()
    rng = make_stream(cfg.seed, r, "particles")
    traj = simulate(
        model, jittered_start(cfg.n, cfg.epsilon), cfg.t_end, cfg.dt, cfg.save_every, rng,
        mode=cfg.mode, seed=split_seed(cfg.seed, r, "particles"),
    )
    eigs = None
    if "cross_check" in cfg.outputs:
        mrng = make_stream(cfg.seed, r, "matrix")
        if cfg.model == "wishart":
            state = sample_wishart(cfg.n, cfg.p, cfg.t_end, mrng)
        else:
            state = sample_symmetric_brownian(cfg.n, cfg.t_end, mrng)
        eigs = eigenvalues(state)
    return ReplicaResult(r, traj, eigs)


def _run_all(cfg: ExperimentConfig):
    idx = range(cfg.replicas)
    if cfg.workers == 1 or cfg.replicas == 1:
        return [run_replica(cfg, r) for r in idx]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(run_replica, [cfg] * cfg.replicas, idx))


def _num(v) -> str:
    return repr(float(v))


def write_trajectory(directory: Path, traj: ParticleTrajectory, cfg: ExperimentConfig) -> None:
    with open(directory / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "particle_index", "position"])
        for t, snap in zip(traj.times, traj.snapshots):
            for i, x in enumerate(snap.positions):
                w.writerow([_num(t), i, _num(x)])
    fs = traj.final_state
    meta = {
        "model": traj.model_name,
        "params": cfg.model_params(),
        "seed": traj.seed,
        "dt": traj.dt,
        "status": "alive" if traj.alive else "exited",
        "exit_reason": None if traj.alive else fs.exit_reason.value,
        "exit_time": None if traj.alive else fs.exit_time,
        "mode": cfg.mode,
        "n_snapshots": len(traj.times),
    }
    (directory / "trajectory.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_trajectory(directory) -> tuple[dict, list]:
    """Load ``trajectory.json`` and the snapshots of ``trajectory.csv`` as measures."""
    directory = Path(directory)
    meta = json.loads((directory / "trajectory.json").read_text())
    by_time: dict = {}
    with open(directory / "trajectory.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            by_time.setdefault(float(row["time"]), []).append(float(row["position"]))
    measures = [EmpiricalMeasure(v, t) for t, v in sorted(by_time.items())]
    return meta, measures


def _hilbert_rows(cfg: ExperimentConfig):
    model = cfg.build_model()
    law, lim, t = model.limit_law_hint, model.limits, cfg.t_end
    lo, hi = law.support(t)
    if cfg.x_grid is not None:
        x = cfg.x_grid.real_points()
    else:
        pad = 0.25 * (hi - lo)
        dx = 1e-3 * max(1.0, hi - lo) / 4.0
        x = np.arange(np.floor((lo - pad) / dx), np.ceil((hi + pad) / dx) + 1) * dx
    dens = law.density(x, t)
    res = density_equation_residual(dens, x, lim.self_similar_exponent, t, lim.b_limit, lim.g2_limit, lim.h2_limit)
    dx = x[1] - x[0]
    interior = (x > lo + EDGE_CELLS * dx) & (x < hi - EDGE_CELLS * dx)
    return x, dens, res, interior


def run_experiment(cfg: ExperimentConfig, stderr=sys.stderr) -> int:
    """Execute ``cfg`` and write all artifacts.  Returns the exit status."""
    check_compatible(cfg)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    results = _run_all(cfg)
    model = cfg.build_model()
    rows = []
    files = []
    faults = []
    for res in results:
        traj = res.trajectory
        d = out / f"replica_{res.index:03d}"
        d.mkdir(exist_ok=True)
        if not traj.alive:
            fs = traj.final_state
            faults.append(f"replica {res.index} exited ({fs.exit_reason.value}) at t={fs.exit_time!r}")
        rows.append(("status", res.index, "alive", 1.0 if traj.alive else 0.0))
        if "trajectory" in cfg.outputs:
            write_trajectory(d, traj, cfg)
            files += [d / "trajectory.csv", d / "trajectory.json"]
        if traj.alive:
            meas = EmpiricalMeasure.from_state(traj.final_state)
            if "measure" in cfg.outputs:
                meas.to_csv(d / "measure.csv")
                write_stieltjes_csv(d / "stieltjes.csv", meas, cfg.z_grid.complex_points())
                files += [d / "measure.csv", d / "stieltjes.csv"]
            if "ks" in cfg.outputs:
                rows.append(("ks", res.index, "ks", ks_distance(meas, model.limit_law_hint, cfg.t_end)))
        if "residual" in cfg.outputs:
            measures = [EmpiricalMeasure(s.positions, s.time) for s in traj.snapshots]
            rep = limit_equation_residual(measures, model.limits, cfg.z_grid.complex_points())
            rep.to_csv(d / "residual.csv")
            rep.to_json(d / "residual.json")
            files += [d / "residual.csv", d / "residual.json"]
            rows += [("residual", res.index, "max", rep.max), ("residual", res.index, "mean", rep.mean)]
        if res.matrix_eigenvalues is not None:
            EmpiricalMeasure(res.matrix_eigenvalues, cfg.t_end).to_csv(d / "matrix_eigenvalues.csv")
            files.append(d / "matrix_eigenvalues.csv")
    alive = [r for r in results if r.trajectory.alive]
    if alive and len(alive) == len(results):
        pooled = EmpiricalMeasure.pooled(EmpiricalMeasure.from_state(r.trajectory.final_state) for r in alive)
        if "ks" in cfg.outputs:
            rows.append(("ks", "pooled", "ks", ks_distance(pooled, model.limit_law_hint, cfg.t_end)))
        if "cross_check" in cfg.outputs:
            eigs = np.concatenate([r.matrix_eigenvalues for r in results])
            rows.append(("cross_check", "pooled", "ks_two_sample", ks_two_sample(eigs, pooled.atoms)))
    if "hilbert_check" in cfg.outputs:
        x, dens, res_h, interior = _hilbert_rows(cfg)
        with open(out / "hilbert.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "density", "residual", "interior"])
            for row in zip(x, dens, res_h, interior):
                w.writerow([_num(row[0]), _num(row[1]), _num(row[2]), int(row[3])])
        files.append(out / "hilbert.csv")
        rows.append(("hilbert_check", "law", "max_interior", float(np.max(res_h[interior]))))
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["product", "replica", "metric", "value"])
        for prod, rep_id, metric, value in rows:
            w.writerow([prod, rep_id, metric, _num(value)])
    files.insert(0, out / "results.csv")
    needs_alive = [p for p in NEEDS_ALIVE if p in cfg.outputs]
    status = EXIT_NUMERICAL if faults and needs_alive else EXIT_OK
    write_manifest(out, cfg, files, status)
    for msg in faults:
        print(f"specflow: {msg}", file=stderr)
    if status == EXIT_NUMERICAL:
        print(f"specflow: {', '.join(needs_alive)} need alive terminal states", file=stderr)
    return status


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig, files, status: int) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "config_text": cfg.to_text(),
        "config_hash": cfg.digest(),
        "versions": {
            "specflow": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "exit_status": status,
        "files": [{"path": str(f.relative_to(out)), "sha256": _sha256(f)} for f in files],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def config_from_manifest(path) -> ExperimentConfig:
    from .config import parse_config

    manifest = json.loads(Path(path).read_text())
    return parse_config(manifest["config_text"])


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Replace fields and re-validate through the parser."""
    from .config import parse_config

    return parse_config(replace(cfg, **{k: v for k, v in kw.items() if v is not None}).to_text())


def verify_manifest(path) -> list:
    """Files whose current hash differs from the manifest (empty when all match)."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    bad = []
    for entry in manifest["files"]:
        f = path.parent / entry["path"]
        if not f.exists() or _sha256(f) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


__all__ = [
    "EXIT_CONFIG", "EXIT_IO", "EXIT_NUMERICAL", "EXIT_OK", "EigenConvergenceError",
    "check_compatible", "config_from_manifest", "run_experiment", "run_replica", "read_trajectory",
    "verify_manifest", "with_overrides",
]
