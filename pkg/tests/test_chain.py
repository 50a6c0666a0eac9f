import math

import numpy as np
import pytest
from scipy import stats

from exitibp import chain, kernels
from exitibp.chain import (ChainCapError, GAUSSIAN, GIG_TIME,
                           malliavin_variance, path_summaries,
                           sample_chain_gaussian, sample_chain_gig)
from exitibp.model import constant_model, tanh_model
from exitibp.rng import RngStream

CONSTANT = constant_model(0.0, 1.0, L=0.0, x0=1.0, T=1.0)
TANH = tanh_model(0.1, 1.0, 0.5, L=0.0, x0=1.0, T=1.0)


def test_path_invariants_gaussian():
    rng = RngStream(1, 0)
    for _ in range(500):
        p = sample_chain_gaussian(rng, TANH, 1.0)
        assert p.scheme == GAUSSIAN
        assert p.states[0] == TANH.x0
        assert p.zeta[0] == 0.0
        assert np.all(np.diff(p.zeta) > 0.0)
        assert p.zeta[-1] <= TANH.T
        assert np.all(p.delta_sq > 0.0)
        assert p.tau_bar > 0.0
        assert p.hit_before_T == (p.tau_bar <= TANH.T - p.zeta[p.n])
        # increments relate states and draws exactly
        for i in range(1, p.n + 1):
            r = p.rho[i - 1]
            anchor = r * p.states[i - 1] + (1 - r) * (2 * TANH.L - p.states[i - 1])
            assert p.states[i] == pytest.approx(
                anchor + TANH.sigma(p.states[i - 1]) * p.z_incr[i - 1], rel=1e-14)


def test_path_invariants_gig():
    rng = RngStream(2, 0)
    for _ in range(500):
        p = sample_chain_gig(rng, TANH, 1.0)
        assert p.scheme == GIG_TIME
        assert np.all(np.diff(p.zeta) > 0.0)
        assert np.all(p.delta_sq > 0.0)


def test_low_rate_paths_have_no_jumps():
    rng = RngStream(3, 0)
    n_zero = 0
    for _ in range(200):
        p = sample_chain_gaussian(rng, CONSTANT, 1e-9)
        if p.n == 0:
            n_zero += 1
            assert p.states.tolist() == [1.0]
            assert p.delta_sq.tolist() == [1.0]
    assert n_zero == 200


def test_poisson_jump_count_mean():
    s = path_summaries(RngStream(4, 0), CONSTANT, 2.0, 100_000, GAUSSIAN)
    n = s[s[:, 0] >= 0][:, 0]
    se = n.std(ddof=1) / math.sqrt(n.size)
    assert abs(n.mean() - 2.0) < 5.0 * se


def test_hit_fraction_on_zero_jump_paths():
    s = path_summaries(RngStream(5, 0), CONSTANT, 1.0, 200_000, GAUSSIAN)
    z = s[s[:, 0] == 0]
    p = z[:, 6].mean()
    se = math.sqrt(p * (1 - p) / z.shape[0])
    assert abs(p - 0.3173105078629141) < 5.0 * se


def _manual_path(n, states, rho, zeta, model, seed=0):
    """Build a ChainPath through the same finishing logic as the samplers."""
    nmax = max(n, 1)
    zeta_buf = np.zeros(nmax + 1)
    zeta_buf[:n + 1] = zeta
    states_buf = np.zeros(nmax + 1)
    states_buf[:n + 1] = states
    rho_buf = np.zeros(nmax)
    rho_buf[:n] = rho
    zinc = np.zeros(nmax)
    for i in range(n):
        r = rho[i]
        anchor = r * states[i] + (1 - r) * (2 * model.L - states[i])
        zinc[i] = (states[i + 1] - anchor) / model.sigma(states[i])
    return chain._finish_path(GAUSSIAN, n, zeta_buf, states_buf, rho_buf,
                              zinc, model, RngStream(seed, 0))


def test_malliavin_variance_examples():
    p0 = _manual_path(0, [1.0], [], [0.0], CONSTANT)
    assert malliavin_variance(p0) == 1.0
    p1 = _manual_path(1, [1.0, 2.0], [1], [0.0, 0.5], CONSTANT)
    assert malliavin_variance(p1) == pytest.approx(5.0, rel=1e-14)
    # reflected anchor 2L - x_prev = -1, increment 3, last leg (0-2)^2 = 4
    p2 = _manual_path(1, [1.0, 2.0], [0], [0.0, 0.5], CONSTANT)
    assert malliavin_variance(p2) == pytest.approx(13.0, rel=1e-14)


def test_cap_exceedance_raises():
    rng = RngStream(6, 0)
    with pytest.raises(ChainCapError):
        for _ in range(50):
            sample_chain_gaussian(rng, CONSTANT, 80.0, n_max=10)


def test_survival_flag_is_strict():
    rng = RngStream(7, 0)
    seen_dead = False
    for _ in range(2000):
        p = sample_chain_gaussian(rng, CONSTANT, 3.0)
        want = all(p.states[i] > CONSTANT.L for i in range(1, p.n + 1))
        assert p.survived == want
        seen_dead = seen_dead or not want
    assert seen_dead


def test_gig_first_increment_marginal():
    # Y_1 - anchor = sigma * Z~_1 with sigma = 1: symmetric exponential law.
    # T is large so conditioning on n >= 1 is negligible (P(tau_1 > T) ~ 0).
    lam = 1.0
    model = constant_model(0.0, 1.0, L=0.0, x0=1.0, T=50.0)
    rng = RngStream(8, 0)
    incr = []
    while len(incr) < 20_000:
        p = sample_chain_gig(rng, model, lam, n_max=400)
        if p.n >= 1:
            incr.append(p.z_incr[0])
    incr = np.abs(np.array(incr))
    d = stats.kstest(incr, "expon",
                     args=(0.0, 1.0 / math.sqrt(2.0 * lam))).statistic
    assert d < 1.628 / math.sqrt(incr.size)


@pytest.mark.parametrize("model", [CONSTANT, TANH])
def test_scheme_law_equality(model):
    n = 100_000
    sg = path_summaries(RngStream(9, 0), model, 1.0, n, GAUSSIAN)
    sq = path_summaries(RngStream(9, 1), model, 1.0, n, GIG_TIME)
    sg = sg[sg[:, 0] >= 0]
    sq = sq[sq[:, 0] >= 0]
    for col, need_jump in ((0, False), (1, True), (2, True), (3, False)):
        a = sg[sg[:, 0] >= 1][:, col] if need_jump else sg[:, col]
        b = sq[sq[:, 0] >= 1][:, col] if need_jump else sq[:, col]
        d = stats.ks_2samp(a, b).statistic
        crit = 1.628 * math.sqrt((a.size + b.size) / (a.size * b.size))
        assert d < crit, f"column {col}: D={d} crit={crit}"


@pytest.mark.parametrize("scheme", [GAUSSIAN, GIG_TIME])
def test_geometric_inequality_and_positive_m(scheme):
    s = path_summaries(RngStream(10, 0), TANH, 1.0, 50_000, scheme)
    s = s[s[:, 0] >= 0]
    assert np.all(s[:, 4] > 0.0)
    surv = s[s[:, 5] == 1.0]
    assert np.all(surv[:, 7] >= abs(TANH.x0 - TANH.L) - 1e-12)


def test_inverse_malliavin_running_mean_converges():
    s = path_summaries(RngStream(11, 0), TANH, 1.0, 1_000_000, GIG_TIME)
    s = s[(s[:, 0] >= 0) & (s[:, 5] == 1.0) & (s[:, 6] == 1.0)]
    inv = 1.0 / s[:, 4]
    n = inv.size
    m_early = inv[:n // 10].mean()
    m_full = inv.mean()
    assert abs(m_full - m_early) / abs(m_full) < 0.02


def test_chain_determinism():
    a = path_summaries(RngStream(12, 3), TANH, 1.0, 1000, GIG_TIME)
    b = path_summaries(RngStream(12, 3), TANH, 1.0, 1000, GIG_TIME)
    assert np.array_equal(a, b, equal_nan=True)
