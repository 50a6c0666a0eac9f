"""Hot numeric kernels: path sampling, weight assembly and per-path estimator values.

Everything in this module is written in numba-compatible scalar Python and
decorated with ``@njit`` unless the environment variable
``EXITIBP_DISABLE_NUMBA`` is set, in which case the *same* functions run as
plain CPython.  numpy's Philox ``Generator`` is consumed identically by both
backends, so the two code paths produce bit-identical draw sequences.

Models and test functions are passed as small scalar codes + parameters so
the kernels stay nopython-compilable:

* model kind 0: constant coefficients, b(y)=p0, a(y)=p1
* model kind 1: tanh family, b(y)=p0*tanh(y), a(y)=p1+p2*tanh(y)
"""

import math
import os

import numpy as np

NUMBA_DISABLED = os.environ.get("EXITIBP_DISABLE_NUMBA", "").strip() not in ("", "0", "false", "False")

if NUMBA_DISABLED:
    def njit(func):
        return func
else:
    import numba

    def njit(func):
        return numba.njit(func, cache=True, nogil=True)


MODEL_CONSTANT = 0
MODEL_TANH = 1

F_CONSTANT = 0
F_INDICATOR = 1
F_LINEAR = 2
F_COSINE = 3
F_POLY = 4

EST_REPRESENTATION = 0
EST_TIME_FUNCTIONAL = 1
EST_DERIVATIVE = 2

SCHEME_GAUSSIAN = 0
SCHEME_GIG = 1

EULER_FUNCTIONAL = 0
EULER_DERIVATIVE = 1


@njit
def coeffs(kind, p0, p1, p2, y):
    """Evaluate (b, b', a, a', a'', sigma) at y for the encoded model."""
    if kind == MODEL_CONSTANT:
        return p0, 0.0, p1, 0.0, 0.0, math.sqrt(p1)
    th = math.tanh(y)
    sech2 = 1.0 - th * th
    b = p0 * th
    bp = p0 * sech2
    a = p1 + p2 * th
    ap = p2 * sech2
    app = -2.0 * p2 * th * sech2
    return b, bp, a, ap, app, math.sqrt(a)


@njit
def f_eval(code, t, big_t, par):
    if code == F_CONSTANT:
        return par
    if code == F_INDICATOR:
        return 1.0 if t < big_t else 0.0
    if code == F_LINEAR:
        return t - big_t
    if code == F_COSINE:
        return math.cos(0.5 * math.pi * t / big_t)
    return (t - big_t) * (t - big_t)


@njit
def f_prime(code, t, big_t, par):
    if code == F_CONSTANT:
        return 0.0
    if code == F_INDICATOR:
        return 0.0  # not differentiable; rejected upstream for derivative runs
    if code == F_LINEAR:
        return 1.0
    if code == F_COSINE:
        return -0.5 * math.pi / big_t * math.sin(0.5 * math.pi * t / big_t)
    return 2.0 * (t - big_t)


@njit
def f_terminal(code, big_t, par):
    if code == F_CONSTANT:
        return par
    return 0.0


# ---------------------------------------------------------------------------
# scalar random draws (shared by the object layer in distributions.py)
# ---------------------------------------------------------------------------

@njit
def draw_exponential(gen, scale):
    u = gen.random()
    while u == 0.0:
        u = gen.random()
    return -math.log1p(-u) * scale


@njit
def draw_sym_exponential(gen, lam):
    """Symmetric exponential: sign * Exp(rate sqrt(2*lam)); nonzero by rejection."""
    sign = -1.0 if gen.random() < 0.5 else 1.0
    mag = draw_exponential(gen, 1.0 / math.sqrt(2.0 * lam))
    while mag == 0.0:
        mag = draw_exponential(gen, 1.0 / math.sqrt(2.0 * lam))
    return sign * mag


@njit
def draw_levy(gen, c):
    """First-passage (Levy) time with density c/sqrt(2 pi s^3) exp(-c^2/(2s))."""
    g = gen.standard_normal()
    while g == 0.0:
        g = gen.standard_normal()
    return (c / g) * (c / g)


@njit
def draw_inverse_gaussian(gen, mean, shape):
    """Michael-Schucany-Haas two-candidate transform.

    The smaller quadratic root is computed from the larger one through
    x_minus * x_plus = mean^2; the direct expression cancels to 0 for large
    normal draws.
    """
    nu = gen.standard_normal()
    w = mean * nu * nu
    x_plus = mean + 0.5 / shape * (mean * w
                                   + mean * math.sqrt(w * (4.0 * shape + w)))
    x_minus = mean * mean / x_plus
    if gen.random() <= mean / (mean + x_minus):
        return x_minus
    return x_plus


@njit
def draw_gig_half(gen, a_par, b_par):
    """GIG(a, b, 1/2) via the reciprocal inverse-Gaussian identity.

    1/X ~ GIG(b, a, -1/2) = InverseGaussian(mean sqrt(a/b), shape a).
    """
    v = draw_inverse_gaussian(gen, math.sqrt(a_par / b_par), a_par)
    return 1.0 / v


# ---------------------------------------------------------------------------
# chain sampling
# ---------------------------------------------------------------------------

@njit
def sample_gaussian_path(gen, kind, p0, p1, p2, lam, big_t, level, x0, n_max,
                         zeta, states, rho, zinc):
    """Reflected chain on Poisson(lam) jump times; fills the work arrays.

    Returns the jump count n, or -1 when the cap n_max is exceeded.
    zinc[i] holds the Brownian increment Z_{i+1} so that
    states[i+1] = anchor + sigma(states[i]) * zinc[i] exactly.
    """
    zeta[0] = 0.0
    t = 0.0
    n = 0
    while True:
        t += draw_exponential(gen, 1.0 / lam)
        if t > big_t:
            break
        if n == n_max:
            return -1
        n += 1
        zeta[n] = t
    states[0] = x0
    for i in range(n):
        r = 1.0 if gen.random() < 0.5 else 0.0
        dz = zeta[i + 1] - zeta[i]
        g = gen.standard_normal()
        while g == 0.0:
            g = gen.standard_normal()
        z = math.sqrt(dz) * g
        _, _, _, _, _, sig = coeffs(kind, p0, p1, p2, states[i])
        anchor = r * states[i] + (1.0 - r) * (2.0 * level - states[i])
        states[i + 1] = anchor + sig * z
        rho[i] = r
        zinc[i] = z
    return n


@njit
def sample_gig_path(gen, kind, p0, p1, p2, lam, big_t, level, x0, n_max,
                    zeta, states, rho, zinc):
    """Space-first chain: symmetric-exponential increments, GIG inter-jump times.

    Same output contract as sample_gaussian_path; the two schemes are equal
    in law jointly in (rho, states, jump times).
    """
    zeta[0] = 0.0
    states[0] = x0
    sq2l = math.sqrt(2.0 * lam)
    t = 0.0
    n = 0
    while True:
        r = 1.0 if gen.random() < 0.5 else 0.0
        zt = draw_sym_exponential(gen, lam)
        _, _, _, _, _, sig = coeffs(kind, p0, p1, p2, states[n])
        anchor = r * states[n] + (1.0 - r) * (2.0 * level - states[n])
        y_next = anchor + sig * zt
        mu = abs(zt) / sq2l
        tau = draw_gig_half(gen, 2.0 * lam, 2.0 * lam * mu * mu)
        t += tau
        if t > big_t:
            break
        if n == n_max:
            return -1
        n += 1
        zeta[n] = t
        states[n] = y_next
        rho[n - 1] = r
        zinc[n - 1] = zt
    return n


# ---------------------------------------------------------------------------
# weight calculus
# ---------------------------------------------------------------------------

@njit
def theta_step(kind, p0, p1, p2, lam, level, x_prev, x_cur, r, dz, z):
    """Per-interval weight theta^i.

    Operator form 2(2r-1)/lam * (I(c1) + I^2(c2)) expanded via the extraction
    formula; the b' term enters with a minus sign.
    """
    if x_cur <= level:
        return 0.0
    b_c, bp_c, a_c, ap_c, app_c, _ = coeffs(kind, p0, p1, p2, x_cur)
    _, _, a_prev, _, _, sig_prev = coeffs(kind, p0, p1, p2, x_prev)
    i1 = z / (sig_prev * dz)
    i2 = z * z / (a_prev * dz * dz) - 1.0 / (a_prev * dz)
    c1 = b_c
    c2 = 0.5 * (a_c - a_prev)
    dc2 = 0.5 * ap_c
    d2c2 = 0.5 * app_c
    dc1 = bp_c
    return 2.0 * (2.0 * r - 1.0) / lam * (c2 * i2 + (c1 - 2.0 * dc2) * i1 + d2c2 - dc1)


@njit
def dtheta_dtau(kind, p0, p1, p2, lam, level, x_prev, x_cur, r, tau, z):
    """Analytic d theta^i / d tau_i (theta depends on tau only through I, I^2)."""
    if x_cur <= level:
        return 0.0
    b_c, _, a_c, ap_c, _, _ = coeffs(kind, p0, p1, p2, x_cur)
    _, _, a_prev, _, _, sig_prev = coeffs(kind, p0, p1, p2, x_prev)
    di1 = -z / (sig_prev * tau * tau)
    di2 = -2.0 * z * z / (a_prev * tau * tau * tau) + 1.0 / (a_prev * tau * tau)
    c1 = b_c
    c2 = 0.5 * (a_c - a_prev)
    dc2 = 0.5 * ap_c
    return 2.0 * (2.0 * r - 1.0) / lam * (c2 * di2 + (c1 - 2.0 * dc2) * di1)


@njit
def time_dual_weight(g_val, g_prime, lam, tau, dsq, a_prev):
    """Adjoint of d/dtau under the GIG(2lam, dsq*lam/a_prev... ) inter-jump law.

    Equals -(G q)'/q for the GIG(2lam, 2lam mu^2, 1/2) density q, which carries
    a minus sign on the dsq term.
    """
    return g_val * (lam + 0.5 / tau - dsq / (2.0 * a_prev * tau * tau)) - g_prime


@njit
def i_hat_last_val(a_n, dsq, tau_bar):
    """Adjoint weight for the final Levy interval, -(d/ds) log p at tau_bar."""
    return 1.5 / tau_bar - dsq / (2.0 * a_n * tau_bar * tau_bar)


# ---------------------------------------------------------------------------
# per-path estimator values
# ---------------------------------------------------------------------------

@njit
def _gamma_product(kind, p0, p1, p2, lam, level, n, zeta, states, rho, zinc):
    gamma = 1.0
    for i in range(1, n + 1):
        th = theta_step(kind, p0, p1, p2, lam, level,
                        states[i - 1], states[i], rho[i - 1],
                        zeta[i] - zeta[i - 1], zinc[i - 1])
        if th == 0.0:
            return 0.0
        gamma *= th
    return gamma


@njit
def path_representation(gen, kind, p0, p1, p2, lam, big_t, level, x0, n_max,
                        fcode, fpar, zeta, states, rho, zinc):
    """One draw of the full representation estimator for f(t, x).

    The no-hit part of the first term is realised by one extra reflected
    Gaussian step over (zeta_n, T] and a fresh Bernoulli sign.
    """
    n = sample_gaussian_path(gen, kind, p0, p1, p2, lam, big_t, level, x0,
                             n_max, zeta, states, rho, zinc)
    if n < 0:
        return 0.0, 1
    gamma = _gamma_product(kind, p0, p1, p2, lam, level, n, zeta, states, rho, zinc)
    _, _, a_n, _, _, sig_n = coeffs(kind, p0, p1, p2, states[n])
    _, _, a_l, _, _, _ = coeffs(kind, p0, p1, p2, level)
    c = abs(level - states[n]) / sig_n
    tau_bar = draw_levy(gen, c)
    term = 0.0
    if tau_bar <= big_t - zeta[n]:
        bar_fac = (a_l - a_n) / a_n
        term += f_eval(fcode, zeta[n] + tau_bar, big_t, fpar) * (gamma + bar_fac * gamma)
    r = 1.0 if gen.random() < 0.5 else 0.0
    g = gen.standard_normal()
    dt = big_t - zeta[n]
    anchor = r * states[n] + (1.0 - r) * (2.0 * level - states[n])
    x_end = anchor + sig_n * math.sqrt(dt) * g
    if x_end >= level:
        term += 2.0 * (2.0 * r - 1.0) * f_eval(fcode, big_t, big_t, fpar) * gamma
    return math.exp(lam * big_t) * term, 0


@njit
def path_time_functional(gen, kind, p0, p1, p2, lam, big_t, level, x0, scheme,
                         n_max, fcode, fpar, zeta, states, rho, zinc):
    """One draw of the reduced estimator for time-only f.

    Internally consumes g = f - f(T) and adds f(T) back, so the reported
    target is E[f(tau ^ T)].
    """
    if scheme == SCHEME_GAUSSIAN:
        n = sample_gaussian_path(gen, kind, p0, p1, p2, lam, big_t, level, x0,
                                 n_max, zeta, states, rho, zinc)
    else:
        n = sample_gig_path(gen, kind, p0, p1, p2, lam, big_t, level, x0,
                            n_max, zeta, states, rho, zinc)
    if n < 0:
        return 0.0, 1
    gamma = _gamma_product(kind, p0, p1, p2, lam, level, n, zeta, states, rho, zinc)
    _, _, a_n, _, _, sig_n = coeffs(kind, p0, p1, p2, states[n])
    _, _, a_l, _, _, _ = coeffs(kind, p0, p1, p2, level)
    c = abs(level - states[n]) / sig_n
    tau_bar = draw_levy(gen, c)
    f_t = f_terminal(fcode, big_t, fpar)
    val = f_t
    if tau_bar <= big_t - zeta[n] and gamma != 0.0:
        g = f_eval(fcode, zeta[n] + tau_bar, big_t, fpar) - f_t
        val += math.exp(lam * big_t) * g * (a_l / a_n) * gamma
    return val, 0


@njit
def path_derivative(gen, kind, p0, p1, p2, lam, big_t, level, x0, n_max,
                    fcode, fpar, zeta, states, rho, zinc,
                    theta_buf, itheta_buf, dsq_buf, suffix_buf):
    """One draw of the integration-by-parts derivative estimator on a GIG-time path.

    Target is E[f'(tau) 1{tau <= T}]; g = f - f(T) is used internally.
    """
    n = sample_gig_path(gen, kind, p0, p1, p2, lam, big_t, level, x0,
                        n_max, zeta, states, rho, zinc)
    if n < 0:
        return 0.0, 1
    m_var = 0.0
    for i in range(1, n + 1):
        tau = zeta[i] - zeta[i - 1]
        _, _, a_prev, _, _, sig_prev = coeffs(kind, p0, p1, p2, states[i - 1])
        d2 = sig_prev * zinc[i - 1] * sig_prev * zinc[i - 1]
        dsq_buf[i - 1] = d2
        m_var += d2
        th = theta_step(kind, p0, p1, p2, lam, level,
                        states[i - 1], states[i], rho[i - 1], tau, zinc[i - 1])
        dth = dtheta_dtau(kind, p0, p1, p2, lam, level,
                          states[i - 1], states[i], rho[i - 1], tau, zinc[i - 1])
        theta_buf[i - 1] = th
        itheta_buf[i - 1] = time_dual_weight(th, dth, lam, tau, d2, a_prev)
    d_last = (level - states[n]) * (level - states[n])
    m_var += d_last
    _, _, a_n, _, _, sig_n = coeffs(kind, p0, p1, p2, states[n])
    _, _, a_l, _, _, _ = coeffs(kind, p0, p1, p2, level)
    c = abs(level - states[n]) / sig_n
    tau_bar = draw_levy(gen, c)
    if tau_bar > big_t - zeta[n]:
        return 0.0, 0
    # suffix products of theta, suffix_buf[i] = prod_{j > i} theta^j (1-based j)
    suffix_buf[n] = 1.0
    for i in range(n - 1, -1, -1):
        suffix_buf[i] = suffix_buf[i + 1] * theta_buf[i]
    total = d_last * i_hat_last_val(a_n, d_last, tau_bar) * suffix_buf[0]
    prefix = 1.0
    for i in range(n):
        total += dsq_buf[i] * itheta_buf[i] * prefix * suffix_buf[i + 1]
        prefix *= theta_buf[i]
    f_t = f_terminal(fcode, big_t, fpar)
    g = f_eval(fcode, zeta[n] + tau_bar, big_t, fpar) - f_t
    val = math.exp(lam * big_t) * (g / m_var) * (a_l / a_n) * total
    return val, 0


# ---------------------------------------------------------------------------
# chunk loops
# ---------------------------------------------------------------------------

@njit
def run_chunk(gen, est_code, kind, p0, p1, p2, lam, big_t, level, x0, scheme,
              n_max, fcode, fpar, out):
    """Fill ``out`` with per-path estimator values; aborted paths become NaN.

    Returns the abort count.
    """
    zeta = np.empty(n_max + 1)
    states = np.empty(n_max + 1)
    rho = np.empty(n_max)
    zinc = np.empty(n_max)
    theta_buf = np.empty(n_max)
    itheta_buf = np.empty(n_max)
    dsq_buf = np.empty(n_max)
    suffix_buf = np.empty(n_max + 1)
    aborts = 0
    for k in range(out.shape[0]):
        if est_code == EST_REPRESENTATION:
            val, bad = path_representation(gen, kind, p0, p1, p2, lam, big_t,
                                           level, x0, n_max, fcode, fpar,
                                           zeta, states, rho, zinc)
        elif est_code == EST_TIME_FUNCTIONAL:
            val, bad = path_time_functional(gen, kind, p0, p1, p2, lam, big_t,
                                            level, x0, scheme, n_max, fcode,
                                            fpar, zeta, states, rho, zinc)
        else:
            val, bad = path_derivative(gen, kind, p0, p1, p2, lam, big_t,
                                       level, x0, n_max, fcode, fpar,
                                       zeta, states, rho, zinc,
                                       theta_buf, itheta_buf, dsq_buf, suffix_buf)
        if bad == 1:
            out[k] = np.nan
            aborts += 1
        else:
            out[k] = val
    return aborts


@njit
def run_chunk_path_summary(gen, kind, p0, p1, p2, lam, big_t, level, x0,
                           scheme, n_max, out):
    """Per-path summary rows used by law-equality and structural diagnostics.

    Columns: n, zeta_1, state_1, state_n, M, survived, hit, sum|dX|, tau_bar.
    Aborted paths get n = -1.
    """
    zeta = np.empty(n_max + 1)
    states = np.empty(n_max + 1)
    rho = np.empty(n_max)
    zinc = np.empty(n_max)
    aborts = 0
    for k in range(out.shape[0]):
        if scheme == SCHEME_GAUSSIAN:
            n = sample_gaussian_path(gen, kind, p0, p1, p2, lam, big_t, level,
                                     x0, n_max, zeta, states, rho, zinc)
        else:
            n = sample_gig_path(gen, kind, p0, p1, p2, lam, big_t, level,
                                x0, n_max, zeta, states, rho, zinc)
        if n < 0:
            out[k, 0] = -1.0
            aborts += 1
            continue
        m_var = 0.0
        abs_sum = 0.0
        survived = 1.0
        for i in range(1, n + 1):
            _, _, _, _, _, sig_prev = coeffs(kind, p0, p1, p2, states[i - 1])
            d = sig_prev * zinc[i - 1]
            m_var += d * d
            abs_sum += abs(d)
            if states[i] <= level:
                survived = 0.0
        d_last = level - states[n]
        m_var += d_last * d_last
        abs_sum += abs(d_last)
        _, _, _, _, _, sig_n = coeffs(kind, p0, p1, p2, states[n])
        tau_bar = draw_levy(gen, abs(level - states[n]) / sig_n)
        out[k, 0] = float(n)
        out[k, 1] = zeta[1] if n >= 1 else np.nan
        out[k, 2] = states[1] if n >= 1 else np.nan
        out[k, 3] = states[n]
        out[k, 4] = m_var
        out[k, 5] = survived
        out[k, 6] = 1.0 if tau_bar <= big_t - zeta[n] else 0.0
        out[k, 7] = abs_sum
        out[k, 8] = tau_bar
    return aborts


@njit
def run_chunk_euler(gen, kind, p0, p1, p2, big_t, level, x0, fcode, fpar,
                    n_steps, out_func, out_deriv):
    """Euler-Maruyama with Brownian-bridge exit correction.

    Fills both the functional value f(tau^T[, X]) and the derivative value
    f'(tau) 1{hit} per path; callers use one or both columns.
    Hit times are attributed to the midpoint of the killing step.
    """
    dt = big_t / n_steps
    sqdt = math.sqrt(dt)
    for k in range(out_func.shape[0]):
        x = x0
        hit = False
        t_hit = big_t
        for j in range(n_steps):
            b_c, _, a_c, _, _, sig = coeffs(kind, p0, p1, p2, x)
            g = gen.standard_normal()
            x_next = x + b_c * dt + sig * sqdt * g
            if x_next <= level:
                hit = True
                t_hit = j * dt + 0.5 * dt
                break
            arg = 2.0 * (x - level) * (x_next - level) / (a_c * dt)
            # skip the uniform when the bridge-crossing probability underflows
            if arg < 45.0 and gen.random() < math.exp(-arg):
                hit = True
                t_hit = j * dt + 0.5 * dt
                break
            x = x_next
        if hit:
            out_func[k] = f_eval(fcode, t_hit, big_t, fpar)
            out_deriv[k] = f_prime(fcode, t_hit, big_t, fpar)
        else:
            out_func[k] = f_eval(fcode, big_t, big_t, fpar)
            out_deriv[k] = 0.0
