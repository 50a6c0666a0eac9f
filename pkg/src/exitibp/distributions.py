"""Random variates, densities and special functions used by the samplers.

The samplers delegate to the scalar kernels so that the object layer and the
fused Monte Carlo kernels consume identical draw sequences from a stream.
"""

from dataclasses import dataclass

import math

from . import kernels
from .rng import RngStream


@dataclass(frozen=True)
class GigParams:
    """Parameters of GIG(a, b, p); here p is always a half-integer."""
    a_par: float
    b_par: float
    p_par: float = 0.5

    def __post_init__(self):
        if self.a_par <= 0.0 or self.b_par <= 0.0:
            raise ValueError("GIG parameters a, b must be positive")


def normal_sample(rng: RngStream, mean: float = 0.0, variance: float = 1.0) -> float:
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    return mean + math.sqrt(variance) * rng.generator.standard_normal()


def symmetric_exponential_sample(rng: RngStream, lambda_poisson: float) -> float:
    """Draw with density (sqrt(2*lam)/2) * exp(-sqrt(2*lam)|y|)."""
    if lambda_poisson <= 0.0:
        raise ValueError("lambda must be positive")
    return kernels.draw_sym_exponential(rng.generator, lambda_poisson)


def symmetric_exponential_density(lambda_poisson: float, y: float) -> float:
    rate = math.sqrt(2.0 * lambda_poisson)
    return 0.5 * rate * math.exp(-rate * abs(y))


def levy_sample(rng: RngStream, c: float) -> float:
    """First-passage time of standard BM from level c, as c^2 / G^2."""
    if c <= 0.0:
        raise ValueError("c must be positive")
    return kernels.draw_levy(rng.generator, c)


def levy_density(c: float, s: float) -> float:
    if s <= 0.0:
        return 0.0
    return c / math.sqrt(2.0 * math.pi * s ** 3) * math.exp(-c * c / (2.0 * s))


def levy_cdf(c: float, t: float) -> float:
    """P(tau <= t) = 2 Phi(-c/sqrt(t)) = erfc(c / sqrt(2t))."""
    if c <= 0.0 or t <= 0.0:
        raise ValueError("c and t must be positive")
    return math.erfc(c / math.sqrt(2.0 * t))


def gig_sample(rng: RngStream, params: GigParams) -> float:
    """GIG(a, b, 1/2) via the reciprocal inverse-Gaussian transform.

    1/X ~ GIG(b, a, -1/2) = InverseGaussian(mean sqrt(a/b), shape a); the IG
    draw uses the exact two-candidate squared-normal method.
    """
    if params.p_par != 0.5:
        raise ValueError("sampler implemented for p = +1/2 only")
    return kernels.draw_gig_half(rng.generator, params.a_par, params.b_par)


def bessel_k_half(nu: float, z: float) -> float:
    """Modified Bessel K of half-integer order by the closed finite sum.

    K_{1/2}(z) = sqrt(pi/(2z)) e^{-z}; higher orders via
    K_nu = K_{1/2} * sum_j (j+m)! / (j! (m-j)!) (2z)^{-j}, m = |nu| - 1/2.
    """
    if z <= 0.0:
        raise ValueError("z must be positive")
    m = abs(nu) - 0.5
    if abs(m - round(m)) > 1e-12:
        raise ValueError("order must be a half-integer")
    m = int(round(m))
    k_half = math.sqrt(math.pi / (2.0 * z)) * math.exp(-z)
    total = 0.0
    for j in range(m + 1):
        total += (math.factorial(j + m)
                  / (math.factorial(j) * math.factorial(m - j))
                  * (2.0 * z) ** (-j))
    return k_half * total


def gig_density(params: GigParams, x: float) -> float:
    if x <= 0.0:
        return 0.0
    a, b, p = params.a_par, params.b_par, params.p_par
    norm = (a / b) ** (p / 2.0) / (2.0 * bessel_k_half(p, math.sqrt(a * b)))
    return norm * x ** (p - 1.0) * math.exp(-(a * x + b / x) / 2.0)


def gig_moment(params: GigParams, k: int) -> float:
    """E[X^k] = (b/a)^{k/2} K_{p+k}(sqrt(ab)) / K_p(sqrt(ab))."""
    a, b, p = params.a_par, params.b_par, params.p_par
    z = math.sqrt(a * b)
    return (b / a) ** (k / 2.0) * bessel_k_half(p + k, z) / bessel_k_half(p, z)


def gig_inverse_moment(params: GigParams, k: int) -> float:
    """E[X^{-k}] = (a/b)^{k/2} K_{p-k}(sqrt(ab)) / K_p(sqrt(ab))."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    a, b, p = params.a_par, params.b_par, params.p_par
    z = math.sqrt(a * b)
    return (a / b) ** (k / 2.0) * bessel_k_half(p - k, z) / bessel_k_half(p, z)


def hermite_h(ell: int, t: float, x: float) -> float:
    """Gaussian-kernel Hermite polynomial g(t,x)^{-1} d^ell/dx^ell g(t,x), ell <= 4."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    if ell == 0:
        return 1.0
    if ell == 1:
        return -x / t
    if ell == 2:
        return x * x / (t * t) - 1.0 / t
    if ell == 3:
        return -x ** 3 / t ** 3 + 3.0 * x / (t * t)
    if ell == 4:
        return x ** 4 / t ** 4 - 6.0 * x * x / t ** 3 + 3.0 / (t * t)
    raise ValueError("order capped at 4")
