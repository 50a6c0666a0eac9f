"""Malliavin-type weights attached to chain paths.

The per-interval weight theta^i is the image of the constant 1 under the
one-step integration-by-parts operator; the time-dual weights are the
adjoints of d/dtau under the inter-jump time laws (GIG on interior
intervals, one-sided stable 1/2 on the final interval).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .chain import ChainPath
from .model import DiffusionModel


class WeightError(RuntimeError):
    pass


@dataclass
class WeightSet:
    """All weights of one path, ready for estimator assembly.

    theta_I[i] (i = 0..n, 0-based) is the fully assembled weight of the
    derivative estimator's i-th term; the last entry is the final-interval
    term theta_hat * i_hat * prod(theta).
    """
    theta: np.ndarray        # n per-interval weights theta^i
    theta_hat: float         # a(L) / a(X_n)
    gamma: float             # prod theta^i, 1 when n = 0
    gamma_bar: float         # (a(L) - a_n)/a_n * gamma
    i_time_theta: np.ndarray # n time-dual weights I_i(theta^i)
    i_hat_last: float        # final-interval adjoint weight Ihat_{n+1}(1)
    theta_I: np.ndarray      # n+1 assembled weights theta^{I_i}
    m_var: float             # Malliavin variance, sum of squared increments
    delta_sq: np.ndarray     # n+1 squared spatial increments


def canonical_integral(ell: int, a_prev: float, sigma_prev: float,
                       dzeta: float, z: float) -> float:
    """Canonical iterated integral I^ell(1) = (-1)^ell H_ell(a_prev*dzeta, sigma_prev*z).

    H_ell is the Gaussian-kernel Hermite polynomial in hermite_h.
    """
    from .distributions import hermite_h
    if dzeta <= 0.0:
        raise WeightError("dzeta must be positive")
    return (-1.0) ** ell * hermite_h(ell, a_prev * dzeta, sigma_prev * z)


def theta_i(model: DiffusionModel, x_prev: float, x_cur: float, rho_i: int,
            dzeta: float, lambda_poisson: float) -> float:
    """Per-interval weight theta^i; zero when the step did not survive.

    The underlying increment is reconstructed from the reflected anchor, so
    the value is a function of the chain state alone.
    """
    if dzeta <= 0.0:
        raise WeightError("dzeta must be positive")
    anchor = rho_i * x_prev + (1 - rho_i) * (2.0 * model.L - x_prev)
    z = (x_cur - anchor) / model.sigma(x_prev)
    p0, p1, p2 = model.params
    return kernels.theta_step(model.kind, p0, p1, p2, lambda_poisson, model.L,
                              x_prev, x_cur, float(rho_i), dzeta, z)


def theta_hat(model: DiffusionModel, x_n: float) -> float:
    """Diffusivity ratio a(L)/a(X_n) attached to the final interval."""
    return model.a(model.L) / model.a(x_n)


def theta_i_tau_derivative(model: DiffusionModel, x_prev: float, x_cur: float,
                           rho_i: int, tau: float, lambda_poisson: float) -> float:
    """Analytic d theta^i / d tau_i at fixed chain state."""
    anchor = rho_i * x_prev + (1 - rho_i) * (2.0 * model.L - x_prev)
    z = (x_cur - anchor) / model.sigma(x_prev)
    p0, p1, p2 = model.params
    return kernels.dtheta_dtau(model.kind, p0, p1, p2, lambda_poisson, model.L,
                               x_prev, x_cur, float(rho_i), tau, z)


def time_dual_general(g_val: float, g_prime: float, lambda_poisson: float,
                      tau: float, delta_sq: float, a_prev: float) -> float:
    """Adjoint of d/dtau under the interior GIG inter-jump law:

    I(G) = G * (lambda + 1/(2 tau) - delta_sq/(2 a_prev tau^2)) - G'.
    """
    if tau <= 0.0:
        raise WeightError("tau must be positive")
    return kernels.time_dual_weight(g_val, g_prime, lambda_poisson, tau,
                                    delta_sq, a_prev)


def time_dual_theta(model: DiffusionModel, x_prev: float, x_cur: float,
                    rho_i: int, tau: float, lambda_poisson: float) -> float:
    """I_i(theta^i): the interior time-dual weight applied to theta^i itself."""
    th = theta_i(model, x_prev, x_cur, rho_i, tau, lambda_poisson)
    dth = theta_i_tau_derivative(model, x_prev, x_cur, rho_i, tau, lambda_poisson)
    anchor = rho_i * x_prev + (1 - rho_i) * (2.0 * model.L - x_prev)
    d = x_cur - anchor
    a_prev = model.a(x_prev)
    return time_dual_general(th, dth, lambda_poisson, tau, d * d, a_prev)


def i_hat_last(a_n: float, delta_last_sq: float, tau_bar: float) -> float:
    """Final-interval adjoint weight, -(d/ds) log of the Levy density at tau_bar:

    3/(2 tau_bar) - delta_last_sq / (2 a_n tau_bar^2).
    """
    if a_n <= 0.0 or delta_last_sq <= 0.0 or tau_bar <= 0.0:
        raise WeightError("i_hat_last arguments must be positive")
    return kernels.i_hat_last_val(a_n, delta_last_sq, tau_bar)


def assemble_weights(path: ChainPath, model: DiffusionModel,
                     lambda_poisson: float) -> WeightSet:
    """Compute every weight of one path.

    Products are evaluated in index order; once any theta factor is zero,
    every product containing it short-circuits to zero (never 0 * inf).
    """
    n = path.n
    theta = np.empty(n)
    itheta = np.empty(n)
    for i in range(1, n + 1):
        x_prev = path.states[i - 1]
        x_cur = path.states[i]
        r = int(path.rho[i - 1])
        tau = path.zeta[i] - path.zeta[i - 1]
        theta[i - 1] = theta_i(model, x_prev, x_cur, r, tau, lambda_poisson)
        itheta[i - 1] = (0.0 if theta[i - 1] == 0.0 else
                         time_dual_theta(model, x_prev, x_cur, r, tau,
                                         lambda_poisson))
    x_n = path.states[n]
    th_hat = theta_hat(model, x_n)
    gamma = 1.0
    for th in theta:
        if th == 0.0:
            gamma = 0.0
            break
        gamma *= th
    a_n = model.a(x_n)
    gamma_bar = (model.a(model.L) - a_n) / a_n * gamma
    d_last = path.delta_sq[n]
    ih = i_hat_last(a_n, d_last, path.tau_bar)
    # suffix[i] = prod_{j > i} theta_j (0-based), with the empty product 1
    suffix = np.empty(n + 1)
    suffix[n] = 1.0
    for i in range(n - 1, -1, -1):
        suffix[i] = 0.0 if theta[i] == 0.0 else suffix[i + 1] * theta[i]
    theta_I = np.empty(n + 1)
    prefix = 1.0
    for i in range(n):
        theta_I[i] = th_hat * prefix * itheta[i] * suffix[i + 1]
        prefix = 0.0 if theta[i] == 0.0 else prefix * theta[i]
    theta_I[n] = th_hat * ih * prefix
    return WeightSet(theta=theta, theta_hat=th_hat, gamma=gamma,
                     gamma_bar=gamma_bar, i_time_theta=itheta, i_hat_last=ih,
                     theta_I=theta_I, m_var=float(path.delta_sq.sum()),
                     delta_sq=path.delta_sq.copy())
