import math
import os
import subprocess
import sys

import numpy as np
import pytest

from exitibp import kernels
from exitibp.chain import ChainCapError, sample_chain_gaussian, sample_chain_gig
from exitibp.estimators import (ConfigError, ExperimentConfig, McStatistics,
                                TIME_SPACE, derivative_contribution,
                                representation_contribution, run_estimator,
                                time_functional_contribution)
from exitibp.estimators import TestFunction as PayoffFn
from exitibp.estimators import test_function_preset as make_f
from exitibp.model import constant_model, tanh_model
from exitibp.rng import RngStream
from exitibp.weights import assemble_weights

P_HIT = 0.3173105078629141
LINEAR_TARGET = -0.150679566688     # E[(tau ^ 1) - 1], constant model
QUADRATIC_TARGET = 0.0898187947998  # E[((tau ^ 1) - 1)^2], constant model

CONSTANT = constant_model(0.0, 1.0, L=0.0, x0=1.0, T=1.0)
TANH = tanh_model(0.1, 1.0, 0.5, L=0.0, x0=1.0, T=1.0)


def _cfg(**kw):
    base = dict(experiment_id="t", estimator="TimeFunctional",
                model_preset="constant", model_params={"b0": 0.0, "a0": 1.0},
                f_preset="linear_shifted", lambda_poisson=1.0, T=1.0, x0=1.0,
                L=0.0, n_samples=100_000, seed=99, output_csv="")
    base.update(kw)
    return ExperimentConfig(**base)


# --- test functions -------------------------------------------------------------

def test_f_presets():
    f = make_f("linear_shifted", 2.0)
    assert f.eval(0.5) == -1.5 and f.eval_dt(0.5) == 1.0 and f.f_at_T == 0.0
    g = make_f("cosine", 1.0)
    assert g.eval(0.0) == 1.0 and g.eval(1.0) == pytest.approx(0.0, abs=1e-16)
    h = make_f("polynomial", 1.0)
    assert h.eval(0.25) == pytest.approx(0.5625)
    ind = make_f("indicator_before_T", 1.0)
    assert ind.eval(0.999) == 1.0 and ind.eval(1.0) == 0.0
    assert not ind.differentiable
    c = make_f("constant", 1.0, value=3.0)
    assert c.eval(0.4) == 3.0 and c.f_at_T == 3.0
    with pytest.raises(ConfigError):
        make_f("exp", 1.0)


def test_f_presets_match_kernel_codes():
    for name in ("constant", "indicator_before_T", "linear_shifted",
                 "cosine", "polynomial"):
        f = make_f(name, 1.3, value=2.0)
        for t in (0.0, 0.4, 1.1, 1.3):
            assert f.eval(t) == pytest.approx(
                kernels.f_eval(f.code, t, 1.3, f.par), rel=1e-14)
            if f.differentiable:
                assert f.eval_dt(t) == pytest.approx(
                    kernels.f_prime(f.code, t, 1.3, f.par), rel=1e-14)


def test_preset_derivatives_consistent():
    for name in ("linear_shifted", "cosine", "polynomial"):
        f = make_f(name, 1.0)
        for t in (0.1, 0.5, 0.9):
            h = 1e-7
            fd = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h)
            assert abs(fd - f.eval_dt(t)) < 1e-6


# --- object layer vs fused kernels -----------------------------------------------

def _kernel_single(est_code, model, lam, fcode, fpar, seed, stream, scheme):
    gen = RngStream(seed, stream).generator
    out = np.empty(1)
    aborts = kernels.run_chunk(gen, est_code, model.kind, *model.params, lam,
                               model.T, model.L, model.x0, scheme, 60,
                               fcode, fpar, out)
    return out[0], aborts


@pytest.mark.parametrize("model", [CONSTANT, TANH])
def test_representation_matches_kernel(model):
    f = make_f("indicator_before_T", model.T)
    for k in range(200):
        kval, ab = _kernel_single(kernels.EST_REPRESENTATION, model, 1.0,
                                  f.code, f.par, 31, k, kernels.SCHEME_GAUSSIAN)
        rng = RngStream(31, k)
        path = sample_chain_gaussian(rng, model, 1.0)
        w = assemble_weights(path, model, 1.0)
        oval = representation_contribution(path, w, f, rng, model, 1.0)
        assert ab == 0
        assert oval == pytest.approx(kval, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("model", [CONSTANT, TANH])
def test_time_functional_matches_kernel(model):
    f = make_f("polynomial", model.T)
    for k in range(200):
        kval, _ = _kernel_single(kernels.EST_TIME_FUNCTIONAL, model, 1.0,
                                 f.code, f.par, 32, k, kernels.SCHEME_GAUSSIAN)
        rng = RngStream(32, k)
        path = sample_chain_gaussian(rng, model, 1.0)
        w = assemble_weights(path, model, 1.0)
        oval = time_functional_contribution(path, w, f, 1.0)
        assert oval == pytest.approx(kval, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("model", [CONSTANT, TANH])
def test_derivative_matches_kernel(model):
    f = make_f("cosine", model.T)
    for k in range(200):
        kval, _ = _kernel_single(kernels.EST_DERIVATIVE, model, 1.0,
                                 f.code, f.par, 33, k, kernels.SCHEME_GIG)
        rng = RngStream(33, k)
        path = sample_chain_gig(rng, model, 1.0)
        w = assemble_weights(path, model, 1.0)
        oval = derivative_contribution(path, w, f, 1.0)
        assert oval == pytest.approx(kval, rel=1e-12, abs=1e-12)


# --- statistics -------------------------------------------------------------------

def test_mcstatistics_from_values_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(2.0, 3.0, size=10_000)
    s = McStatistics.from_values(x)
    assert s.count == x.size
    assert s.mean == pytest.approx(x.mean(), rel=1e-14)
    assert s.m2 / s.count == pytest.approx(x.var(), rel=1e-12)
    assert s.stderr() == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-12)
    assert s.min == x.min() and s.max == x.max()
    kurt = ((x - x.mean()) ** 4).mean() / x.var() ** 2 - 3.0
    assert s.kurtosis() == pytest.approx(kurt, rel=1e-10)


def test_mcstatistics_merge_permutation_invariant():
    rng = np.random.default_rng(1)
    chunks = [rng.normal(size=rng.integers(10, 500)) for _ in range(20)]
    full = McStatistics.from_values(np.concatenate(chunks))
    merged = McStatistics()
    for c in chunks:
        merged = merged.merge(McStatistics.from_values(c))
    backwards = McStatistics()
    for c in reversed(chunks):
        backwards = backwards.merge(McStatistics.from_values(c))
    for s in (merged, backwards):
        assert s.count == full.count
        assert abs(s.mean - full.mean) < 1e-12 * (1.0 + abs(full.mean))
        assert abs(s.m2 - full.m2) < 1e-12 * full.m2
        assert abs(s.m4 - full.m4) < 1e-10 * full.m4


def test_mcstatistics_empty_merge():
    s = McStatistics().merge(McStatistics(abort_count=3))
    assert s.count == 0 and s.abort_count == 3
    t = s.merge(McStatistics.from_values(np.array([1.0, 2.0])))
    assert t.count == 2 and t.mean == 1.5 and t.abort_count == 3


def test_ci99_width():
    s = McStatistics.from_values(np.arange(100.0))
    lo, hi = s.ci99()
    assert hi - lo == pytest.approx(2.0 * 2.5758293035489004 * s.stderr())


# --- engine ------------------------------------------------------------------------

def test_run_estimator_determinism_and_worker_independence():
    cfg = _cfg(n_samples=50_000, workers=1)
    s1, _ = run_estimator(cfg)
    cfg.workers = 3
    s3, _ = run_estimator(cfg)
    cfg.workers = 1
    s1b, _ = run_estimator(cfg)
    assert s1.mean == s3.mean == s1b.mean
    assert s1.m2 == s3.m2 == s1b.m2
    assert s1.count == s3.count


def test_exit_ibp_threads_env_override(monkeypatch):
    monkeypatch.setenv("EXIT_IBP_THREADS", "2")
    _, meta = run_estimator(_cfg(n_samples=10_000))
    assert meta["workers"] == 2
    monkeypatch.setenv("EXIT_IBP_THREADS", "zero")
    with pytest.raises(ConfigError):
        run_estimator(_cfg(n_samples=10_000))


def test_constant_model_targets():
    s, _ = run_estimator(_cfg(estimator="Representation",
                              f_preset="indicator_before_T",
                              n_samples=400_000, seed=51))
    assert abs(s.mean - P_HIT) < 3.0 * s.stderr()

    s, _ = run_estimator(_cfg(estimator="Representation", f_preset="constant",
                              n_samples=400_000, seed=52))
    assert abs(s.mean - 1.0) < 3.0 * s.stderr()

    s, _ = run_estimator(_cfg(estimator="TimeFunctional",
                              f_preset="linear_shifted",
                              n_samples=400_000, seed=53))
    assert abs(s.mean - LINEAR_TARGET) < 3.0 * s.stderr()

    s, _ = run_estimator(_cfg(estimator="TimeFunctional", f_preset="polynomial",
                              n_samples=400_000, seed=54))
    assert abs(s.mean - QUADRATIC_TARGET) < 3.0 * s.stderr()

    s, _ = run_estimator(_cfg(estimator="Derivative", f_preset="linear_shifted",
                              n_samples=400_000, seed=55))
    assert abs(s.mean - P_HIT) < 3.0 * s.stderr()


def test_derivative_of_constant_f_is_exactly_zero():
    s, _ = run_estimator(_cfg(estimator="Derivative", f_preset="constant",
                              n_samples=5_000, seed=56))
    assert s.mean == 0.0 and s.m2 == 0.0


def test_cross_scheme_time_functional_agreement():
    f = make_f("polynomial", 1.0)
    means = {}
    for scheme in (kernels.SCHEME_GAUSSIAN, kernels.SCHEME_GIG):
        gen = RngStream(57, scheme).generator
        out = np.empty(200_000)
        kernels.run_chunk(gen, kernels.EST_TIME_FUNCTIONAL, CONSTANT.kind,
                          *CONSTANT.params, 1.0, 1.0, 0.0, 1.0, scheme, 60,
                          f.code, f.par, out)
        means[scheme] = (out.mean(), out.std(ddof=1) / math.sqrt(out.size))
    diff = abs(means[0][0] - means[1][0])
    assert diff < 3.0 * math.hypot(means[0][1], means[1][1])


def test_expected_state_at_stopping_time():
    """E[X_{tau ^ T}] = x0 for the driftless model (optional stopping),
    exercised through a custom space-dependent payoff."""
    f = PayoffFn(kind=TIME_SPACE, eval=lambda t, x: x,
                     eval_dt=lambda t: 0.0, f_at_T=0.0, big_t=1.0)
    vals = []
    for k in range(20_000):
        rng = RngStream(58, k)
        try:
            path = sample_chain_gaussian(rng, CONSTANT, 1.0)
        except ChainCapError:
            continue
        w = assemble_weights(path, CONSTANT, 1.0)
        vals.append(representation_contribution(path, w, f, rng, CONSTANT, 1.0))
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 1.0) < 3.0 * se


def test_abort_counting():
    cfg = _cfg(n_samples=5_000, n_max=2, lambda_poisson=6.0, seed=59)
    s, meta = run_estimator(cfg)
    assert meta["abort_count"] > 0
    assert s.count + s.abort_count == 5_000
    assert meta["bias_flag"]


def test_median_of_means_metadata():
    cfg = _cfg(n_samples=50_000, chunk_size=1000, median_of_means_blocks=10)
    _, meta = run_estimator(cfg)
    assert "mom_mean" in meta and "mom_stderr" in meta
    assert abs(meta["mom_mean"] - LINEAR_TARGET) < 0.05


# --- config validation ----------------------------------------------------------------

RAW = {"experiment_id": "e1", "estimator": "TimeFunctional",
       "model_preset": "constant", "f_preset": "linear_shifted",
       "lambda": "default", "T": 2.0, "x0": 1.0, "L": 0.0,
       "n_samples": 1000, "seed": 7, "output_csv": "out.csv"}


def test_config_from_dict_roundtrip():
    cfg = ExperimentConfig.from_dict(dict(RAW))
    assert cfg.lambda_poisson == 0.5  # "default" = 1/T
    assert cfg.chunk_size == 4096 and cfg.n_max == 60


def test_config_rejects_unknown_keys():
    raw = dict(RAW, typo_field=1)
    with pytest.raises(ConfigError, match="typo_field"):
        ExperimentConfig.from_dict(raw)


def test_config_reports_missing_field():
    raw = dict(RAW)
    del raw["x0"]
    with pytest.raises(ConfigError, match="x0"):
        ExperimentConfig.from_dict(raw)


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, x0=-1.0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, T=0.0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, n_samples=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, chunk_size=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, estimator="Magic"))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(RAW, model_preset="brownian")).build_model()


def test_config_model_preset_with_params():
    raw = dict(RAW, model_preset={"name": "tanh", "beta": 0.2, "alpha0": 1.0,
                                  "alpha1": 0.3})
    cfg = ExperimentConfig.from_dict(raw)
    model = cfg.build_model()
    assert model.preset == "tanh"
    assert model.params == (0.2, 1.0, 0.3)


def test_derivative_rejects_indicator():
    with pytest.raises(ConfigError):
        run_estimator(_cfg(estimator="Derivative",
                           f_preset="indicator_before_T"))


# --- backend equivalence -----------------------------------------------------------

FALLBACK_SNIPPET = """
import json
from exitibp.estimators import ExperimentConfig, run_estimator
cfg = ExperimentConfig(experiment_id="t", estimator="{est}",
    model_preset="tanh", model_params={{"beta": 0.1, "alpha0": 1.0, "alpha1": 0.5}},
    f_preset="polynomial", lambda_poisson=1.0, T=1.0, x0=1.0, L=0.0,
    n_samples=20000, seed=77, output_csv="")
s, _ = run_estimator(cfg)
print(json.dumps([s.mean, s.m2, s.count]))
"""


@pytest.mark.parametrize("est", ["TimeFunctional", "Derivative"])
def test_numba_and_fallback_bit_identical(est):
    results = {}
    for disable in ("0", "1"):
        env = dict(os.environ, EXITIBP_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, "-c",
                              FALLBACK_SNIPPET.format(est=est)],
                             capture_output=True, text=True, env=env, check=True)
        results[disable] = out.stdout.strip().splitlines()[-1]
    assert results["0"] == results["1"]
