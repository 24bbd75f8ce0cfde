"""End-to-end acceptance criteria 1-9 at their stated tolerances.

Every test records one pass/fail line (printed in the terminal summary)
before asserting.  Expensive simulations are shared through session
fixtures.  Deselect with ``-m "not acceptance"``.
"""

import filecmp
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from specflow.cli import hilbert_check
from specflow.equations import limit_equation_residual, pde_residual
from specflow.laws import LimitLaw, StandardMarchenkoPastur, beta_mp_G, mp_G, semicircle_G
from specflow.matrix import eigendecompose, eigenvalues, sample_wishart, SymmetricMatrixState
from specflow.measures import EmpiricalMeasure, ks_distance, ks_two_sample
from specflow.models import make_beta_laguerre, make_dyson, make_wishart
from specflow.particles import jittered_start, simulate
from specflow.rng import make_stream

pytestmark = pytest.mark.acceptance

SEEDS = range(10)
KS_TOL = 0.08
# documented residual grid: -3..3, 13 points, Im z = 1
Z_RESIDUAL = np.linspace(-3, 3, 13) + 1j


def _run(model, n, seed, t_end=1.0, dt=1e-3, save_every=10):
    t0 = time.perf_counter()
    tr = simulate(model, jittered_start(n), t_end, dt, save_every, make_stream(seed, 0, "particles"))
    return tr, time.perf_counter() - t0


def _terminal(tr):
    return EmpiricalMeasure.from_state(tr.final_state)


def _ks_runs(runs, law, t=1.0):
    return [ks_distance(_terminal(tr), law, t) if tr.alive else np.inf for tr, _ in runs]


def _ordered(runs):
    return all(np.all(np.diff(s.positions) > 0) for tr, _ in runs for s in tr.snapshots)


@pytest.fixture(scope="session")
def dyson300():
    m = make_dyson(300)
    return [_run(m, 300, s) for s in SEEDS]


@pytest.fixture(scope="session")
def dyson100():
    m = make_dyson(100)
    return [_run(m, 100, s) for s in range(5)]


@pytest.fixture(scope="session")
def wishart200():
    m = make_wishart(200, 400)
    return [_run(m, 200, s) for s in SEEDS]


@pytest.fixture(scope="session")
def laguerre200():
    out = {}
    for beta in (1.0, 2.0):
        m = make_beta_laguerre(200, beta, 400.0)
        out[beta] = [_run(m, 200, s) for s in SEEDS]
    return out


def test_criterion_1_semicircle(dyson300, criterion_report):
    ks = _ks_runs(dyson300, LimitLaw.semicircle())
    secs = [el for _, el in dyson300]
    good = sum(k <= KS_TOL for k in ks)
    ok = criterion_report(
        1, good >= 9,
        f"Dyson N=300 KS<={KS_TOL} for {good}/10 seeds (max {max(ks):.4f}); "
        f"runtime per seed mean {np.mean(secs):.1f}s max {max(secs):.1f}s (target 60s)",
    )
    assert ok


def test_criterion_2_marchenko_pastur(wishart200, criterion_report):
    ks = _ks_runs(wishart200, LimitLaw.marchenko_pastur(2.0))
    good = sum(k <= KS_TOL for k in ks)
    ok = criterion_report(2, good >= 9, f"Wishart n=200 p=400 KS<={KS_TOL} for {good}/10 seeds (max {max(ks):.4f})")
    assert ok


def test_criterion_3_beta_mp(laguerre200, criterion_report):
    ks1 = _ks_runs(laguerre200[1.0], LimitLaw.marchenko_pastur(2.0))
    # beta = 2 against both routes: closed-form transform and the (1/c, c beta t) density
    ks2 = _ks_runs(laguerre200[2.0], LimitLaw.beta_marchenko_pastur(2.0, 2.0))
    ks2s = _ks_runs(laguerre200[2.0], StandardMarchenkoPastur.from_beta_laguerre(2.0, 2.0))
    good = [sum(k <= KS_TOL for k in ks) for ks in (ks1, ks2, ks2s)]
    ok = criterion_report(
        3, all(g >= 9 for g in good),
        f"beta=1 vs MP(c=2) {good[0]}/10 (max {max(ks1):.4f}); beta=2 vs beta-MP {good[1]}/10 "
        f"(max {max(ks2):.4f}); beta=2 vs MP(1/c, c beta t) {good[2]}/10 (max {max(ks2s):.4f})",
    )
    assert ok


def test_criterion_4_identities(criterion_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    z = rng.uniform(-6, 10, 1000) + 1j * rng.uniform(1e-3, 6, 1000)
    quad = []
    for c in (1.0, 2.0, 4.0):
        g = mp_G(z, 1.0, c)
        quad.append(np.max(np.abs(z * g * g + (c - 1 - z) * g + 1)))
    for t in (0.25, 1.0, 3.0):
        g = semicircle_G(z, t)
        quad.append(np.max(np.abs(t * g * g - z * g + 1)))
    scale = []
    for t in (0.1, 0.7, 2.5):
        for c in (1.0, 2.0, 4.0):
            scale.append(np.max(np.abs(mp_G(z, t, c) - mp_G(z / t, 1.0, c) / t)))
        s = np.sqrt(t)
        scale.append(np.max(np.abs(semicircle_G(z, t) - semicircle_G(z / s, 1.0) / s)))
    secs = time.perf_counter() - t0
    ok = criterion_report(
        4, max(quad) <= 1e-12 and max(scale) <= 1e-13 and secs < 1.0,
        f"quadratic max {max(quad):.2e} (<=1e-12), scaling max {max(scale):.2e} (<=1e-13), {secs:.3f}s (<1s)",
    )
    assert ok


def test_criterion_5_pde_residuals(criterion_report):
    t0 = time.perf_counter()
    t_grid = np.linspace(0.1, 1.0, 10)
    z = [2j, 1 + 1j, -3 + 0.5j, 5 + 1j]
    semi = pde_residual(semicircle_G, t_grid, z, "semicircle").max
    mp = pde_residual(lambda w, t: mp_G(w, t, 2.0), t_grid, z, "wishart", c=2.0).max
    bmp = pde_residual(lambda w, t: beta_mp_G(w, t, 2.0, 2.0), t_grid, z, "wishart", c=2.0, beta=2.0).max
    secs = time.perf_counter() - t0
    worst = max(semi, mp, bmp)
    ok = criterion_report(
        5, worst <= 1e-6 and secs < 5.0,
        f"semicircle {semi:.2e}, MP(c=2) {mp:.2e}, beta-MP(c=2,beta=2) {bmp:.2e} (<=1e-6), {secs:.2f}s (<5s)",
    )
    assert ok


def _residuals(runs, model):
    out = []
    for tr, _ in runs:
        measures = [EmpiricalMeasure(s.positions, s.time) for s in tr.snapshots]
        out.append(limit_equation_residual(measures, model.limits, Z_RESIDUAL))
    return out


def test_criterion_6_limit_equation_residual(dyson300, dyson100, criterion_report):
    big = _residuals(dyson300[:5], make_dyson(300))
    small = _residuals(dyson100, make_dyson(100))
    worst = max(r.max for r in big)
    wins = sum(b.mean < s.mean for b, s in zip(big, small))
    ok = criterion_report(
        6, worst <= 0.05 and wins >= 4,
        f"N=300 max residual {worst:.4f} (<=0.05); mean N=300 < N=100 in {wins}/5 seed pairs "
        f"(means {np.mean([r.mean for r in big]):.2e} vs {np.mean([r.mean for r in small]):.2e})",
    )
    assert ok


def test_criterion_7_cross_oracle(criterion_report):
    m = make_wishart(50, 100)
    eigs, parts = [], []
    for r in range(200):
        eigs.append(eigenvalues(sample_wishart(50, 100, 1.0, make_stream(7, r, "matrix"))))
        tr = simulate(m, jittered_start(50), 1.0, 1e-3, 1000, make_stream(7, r, "particles"))
        assert tr.alive
        parts.append(tr.final_state.positions)
    ks = ks_two_sample(np.concatenate(eigs), np.concatenate(parts))
    ok = criterion_report(7, ks <= 0.1, f"Wishart n=50 p=100, 200 replicas each: two-sample KS {ks:.4f} (<=0.1)")
    assert ok


def test_criterion_8_hilbert(criterion_report):
    semi = hilbert_check(LimitLaw.semicircle(), 1.0, 1e-3)
    mp = hilbert_check(LimitLaw.marchenko_pastur(2.0), 1.0, 1e-3)
    h, rs, rm = semi["hilbert_max_error"], semi["density_residual_max_interior"], mp["density_residual_max_interior"]
    ok = criterion_report(
        8, h <= 1e-3 and rs <= 1e-3 and rm <= 1e-2,
        f"H(semicircle) error on |x|<=1.8 {h:.2e} (<=1e-3); density residual semicircle {rs:.2e} (<=1e-3), "
        f"MP(c=2) {rm:.2e} (<=1e-2)",
    )
    assert ok


def _herglotz_violations(rng, draws=100, per_draw=1000):
    # draws * per_draw = 1e5 probes per transform, each draw with its own (t, c, beta)
    bad = 0
    atoms = EmpiricalMeasure(rng.normal(size=300), 1.0)
    for _ in range(draws):
        z = rng.uniform(-10, 10, per_draw) + 1j * 10.0 ** rng.uniform(-6, 2, per_draw)
        t, c, beta = rng.uniform(0.05, 5), rng.uniform(1, 6), rng.uniform(0.2, 4)
        for g in (semicircle_G(z, t), mp_G(z, t, c), beta_mp_G(z, t, c, beta), atoms.stieltjes(z)):
            bad += int(np.sum(np.asarray(g).imag >= 0))
    return bad


def _run_cli(tmp_path, name, workers, threads):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        'model = "dyson"\nn = 20\nt_end = 0.1\ndt = 0.001\nseed = 99\nreplicas = 4\n'
        "outputs = trajectory, measure, ks, residual, cross_check\n"
    )
    env = dict(os.environ, OMP_NUM_THREADS=str(threads), OPENBLAS_NUM_THREADS=str(threads),
               MKL_NUM_THREADS=str(threads))
    out = tmp_path / name
    cmd = [sys.executable, "-m", "specflow.cli", "run", str(cfg), "--out", str(out), "--workers", str(workers)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


def _same_tree(a, b):
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "manifest.json")
    return bool(files) and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)


def test_criterion_9_invariants(dyson300, wishart200, laguerre200, tmp_path, criterion_report):
    runs = dyson300 + wishart200 + laguerre200[1.0] + laguerre200[2.0]
    ordered = _ordered(runs)
    herglotz = _herglotz_violations(np.random.default_rng(9))
    rng = np.random.default_rng(10)
    recon = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 40))
        a = rng.normal(size=(n, n))
        s = SymmetricMatrixState((a + a.T) / 2)
        recon = max(recon, float(np.max(np.abs(eigendecompose(s).reconstruct() - s.entries))))
    base = _run_cli(tmp_path, "w1t1", 1, 1)
    same = all(_same_tree(base, _run_cli(tmp_path, f"w{w}t{t}", w, t)) for w, t in ((2, 1), (1, 4), (2, 4)))
    ok = criterion_report(
        9, ordered and herglotz == 0 and recon <= 1e-10 and same,
        f"ordering kept in all {len(runs)} trajectories: {ordered}; Herglotz violations {herglotz}/4e5; "
        f"reconstruction max {recon:.2e} (<=1e-10); byte-identical over workers 1,2 x BLAS threads 1,4: {same}",
    )
    assert ok
