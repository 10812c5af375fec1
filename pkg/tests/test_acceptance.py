"""Acceptance suite. Each test records one PASS/FAIL line, printed at the end of the run."""

import time

import numpy as np
import pytest

from mfspeak.classifier import confusion_matrix, dual_objective, format_table, rbf_gram, smo_solve
from mfspeak.config import RunConfig
from mfspeak.features import (
    NormalizedSpectrum, block_contrast, cross_correlation_matrix, feature_skewness,
    resample_to_common_grid,
)
from mfspeak.mfdfa import (
    HurstCurve, Profile, SingularitySpectrum, fit_spectrum,
    local_fluctuations, run_mfdfa, scaling_exponents, singularity_spectrum,
)
from mfspeak.pipeline import cmd_report, cmd_synth, surrogate_experiment
from mfspeak.signal_io import CascadeSpec, gen_binomial_cascade, gen_white_noise

from oracles import brute_force_dual, h_binomial_cascade, naive_local_fluctuations

SEEDS = range(10)


def test_1_cascade_oracle(criterion):
    details, ok = [], True
    for a in (0.6, 0.75):
        t0 = time.perf_counter()
        res = run_mfdfa(gen_binomial_cascade(CascadeSpec(16, a)))
        elapsed = time.perf_counter() - t0
        q = res.hurst.q
        nz = q != 0
        err = float(np.max(np.abs(res.hurst.h[nz] - h_binomial_cascade(q[nz], a))))
        ok &= err <= 0.05 and elapsed < 10.0
        details.append(f"a={a}: max|h-h_analytic|={err:.4f} in {elapsed:.2f}s")
    criterion(1, "cascade oracle (<=0.05, <10 s)", ok, "; ".join(details))
    assert ok


def test_2_monofractal_oracle(criterion):
    h2, widths = [], []
    for seed in SEEDS:
        res = run_mfdfa(gen_white_noise(2 ** 16, seed))
        h2.append(float(res.hurst.h[res.hurst.q == 2.0][0]))
        widths.append(res.fit.width)
    mh, mw = float(np.mean(h2)), float(np.mean(widths))
    ok_h = 0.45 <= mh <= 0.55
    ok_w = mw < 0.2
    criterion(2, "white noise h(2) in [0.45, 0.55] and W < 0.2 (10-seed mean)", ok_h and ok_w,
              f"mean h(2)={mh:.4f} ({'ok' if ok_h else 'out'}), mean W={mw:.4f} "
              f"({'ok' if ok_w else 'too wide'}); per-seed W min {min(widths):.3f} "
              f"max {max(widths):.3f}")
    assert ok_h, mh
    assert ok_w, mw


def test_3_algebraic_exactness(criterion):
    q = np.arange(-5, 5.25, 0.25)
    rng = np.random.default_rng(0)
    checks = {}
    for _ in range(20):
        h = 0.5 + rng.normal(0, 0.2, q.size)
        curve = HurstCurve(q, h, np.zeros_like(q), np.ones_like(q))
        _, tau = scaling_exponents(curve)
        spec = singularity_spectrum(curve)
        checks.setdefault("tau(0) == -1", True)
        checks["tau(0) == -1"] &= bool(tau[q == 0][0] == -1.0)
        checks.setdefault("f == 1 at q=0", True)
        checks["f == 1 at q=0"] &= bool(spec.f[q == 0][0] == 1.0)

    alpha = np.linspace(-0.5, 1.5, 41)
    fit = fit_spectrum(SingularitySpectrum(alpha, 1.0 - (alpha - 0.5) ** 2, np.arange(41.0)))
    checks["parabola A,B,C,W"] = (abs(fit.A + 1) <= 1e-9 and abs(fit.B) <= 1e-9
                                  and abs(fit.C - 1) <= 1e-9 and abs(fit.width - 2) <= 1e-9)

    u = np.linspace(-0.6, 0.6, 25)
    f_sym = 1.0 - 2.0 * u ** 2 - u ** 4
    sym = SingularitySpectrum(0.9 + u, f_sym, np.arange(25.0))
    b_sym = fit_spectrum(sym).B
    mass = np.maximum(f_sym, 0.0)
    f2 = feature_skewness(NormalizedSpectrum(0.9 + u, mass / mass.sum()))
    checks["symmetric B and Feature2"] = abs(b_sym) <= 1e-9 and abs(f2) <= 1e-9

    ok = all(checks.values())
    criterion(3, "algebraic exactness", ok,
              ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items())
              + f" (B={b_sym:.1e}, Feature2={f2:.1e})")
    assert ok


def test_4_brute_force_equivalence(criterion):
    rng = np.random.default_rng(1)
    worst_f, cases = 0.0, 0
    for n in range(2, 65):
        y = np.cumsum(rng.normal(size=n))
        for m in range(3):
            for s in range(m + 1, min(8, n) + 1):
                for both in (False, True):
                    got = local_fluctuations(Profile(y), s, m, both)
                    ref = naive_local_fluctuations(y, s, m, both)
                    worst_f = max(worst_f, float(np.max(np.abs(got - ref))))
                    cases += 1

    worst_d, instances = 0.0, 0
    for n in range(2, 9):
        for _ in range(25 if n < 8 else 10):
            X = rng.normal(size=(n, 2)) * rng.uniform(0.2, 3.0)
            y = rng.choice([-1.0, 1.0], size=n)
            y[0], y[1] = 1.0, -1.0
            K = rbf_gram(X, X, rng.uniform(0.05, 5.0))
            C = float(rng.uniform(0.05, 50.0))
            alpha, _, _, _ = smo_solve(K, y, C, tol=1e-9, max_iter=100000)
            best, _ = brute_force_dual(K, y, C)
            worst_d = max(worst_d, best - dual_objective(alpha, y, K))
            instances += 1
    ok = worst_f <= 1e-10 and worst_d <= 1e-6
    criterion(4, "brute-force equivalence", ok,
              f"{cases} fluctuation cases max diff {worst_f:.1e} (<=1e-10); "
              f"{instances} SMO instances max objective shortfall {worst_d:.1e} (<=1e-6)")
    assert ok


def _reference_fixture():
    labels = [f"Speaker{k}" for k in range(1, 6)]
    sizes = [5, 4, 5, 6, 5]
    actual = [c for c, n in zip(labels, sizes) for _ in range(n)]
    predicted = list(actual)
    predicted[actual.index("Speaker4")] = "Speaker2"
    return confusion_matrix(actual, predicted, labels)


@pytest.fixture(scope="module")
def surrogate_runs():
    return {seed: surrogate_experiment(seed) for seed in SEEDS}


def test_5_surrogate_experiment(criterion, surrogate_runs):
    acc = [surrogate_runs[s]["accuracy"] for s in SEEDS]
    sizes = {(r["train_idx"].size, r["test_idx"].size) for r in surrogate_runs.values()}
    passing = sum(a >= 0.9 for a in acc)
    cm = _reference_fixture()
    text = format_table(cm)
    table_ok = (cm.accuracy == 24 / 25 and cm.recall[3] == 5 / 6 and cm.precision[1] == 4 / 5
                and text.splitlines()[-1].split()[-1] == "96%" and "83.3%" in text
                and "80%" in text)
    ok = passing >= 9 and sizes == {(75, 25)} and table_ok
    criterion(5, "surrogate experiment (>=0.9 on >=9/10 seeds) + confusion-report arithmetic", ok,
              f"{passing}/10 seeds >= 0.9, accuracies {[round(a, 2) for a in acc]}, "
              f"split {sorted(sizes)}, table fixture {'ok' if table_ok else 'FAIL'}")
    assert ok


def test_6_correlation_blocks(criterion, surrogate_runs):
    run = surrogate_runs[0]
    _, aligned = resample_to_common_grid(run["spectra"], RunConfig().grid_size)
    r = cross_correlation_matrix(aligned)
    within, between = block_contrast(r, run["labels"])
    shape_ok = (np.array_equal(r, r.T) and np.all(np.diag(r) == 1.0)
                and np.all(np.abs(r) <= 1.0))
    ok = within - between >= 0.2 and shape_ok and r.shape == (100, 100)
    criterion(6, "correlation block structure", ok,
              f"within {within:.3f} - between {between:.3f} = {within - between:.3f} (>=0.2); "
              f"symmetric/unit-diagonal/bounded {'ok' if shape_ok else 'FAIL'}")
    assert ok


def test_7_determinism(criterion, tmp_path):
    manifest = cmd_synth(tmp_path / "corpus", seed=11)
    cfg = RunConfig()
    cmd_report(manifest, tmp_path / "run1", cfg, seed=11, jobs=1)
    cmd_report(manifest, tmp_path / "run2", cfg, seed=11, jobs=4)
    cmd_report(manifest, tmp_path / "run3", cfg, seed=11, jobs=1)
    files = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*")
                   if p.is_file())
    differ = [str(f) for f in files for other in ("run2", "run3")
              if (tmp_path / "run1" / f).read_bytes() != (tmp_path / other / f).read_bytes()]
    n_csv = sum(f.suffix == ".csv" for f in files)
    ok = not differ and n_csv > 100
    criterion(7, "determinism across runs and jobs=1/4", ok,
              f"{len(files)} files ({n_csv} CSV) compared, {len(differ)} differ")
    assert ok, differ
