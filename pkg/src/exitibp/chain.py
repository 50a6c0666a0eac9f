"""Sampling of the reflected Markov chain under both schemes.

The Gaussian/Poisson scheme drives the representation estimator; the
space-first scheme (symmetric-exponential increments, GIG inter-jump times)
drives the derivative estimator.  By construction the two schemes are equal
in law jointly in (rho, states, jump times).
"""

from dataclasses import dataclass

import math

import numpy as np

from . import kernels
from .model import DiffusionModel
from .rng import RngStream

GAUSSIAN = "gaussian"
GIG_TIME = "gig"


class ChainCapError(RuntimeError):
    """Jump count exceeded the configured cap; the path must be discarded and counted."""


class DegeneratePathError(RuntimeError):
    """A spatial increment is exactly zero (probability-zero event, signals a fault)."""


@dataclass
class ChainPath:
    scheme: str
    n: int
    zeta: np.ndarray          # n+1 jump times, zeta[0] = 0
    rho: np.ndarray           # n reflection bits
    states: np.ndarray        # n+1 chain states, states[0] = x0
    z_incr: np.ndarray        # n increments Z_i (gaussian) or Z~_i (gig)
    tau_bar: float            # final-interval hitting draw
    hit_before_T: bool
    survived: bool            # states[i] > L for i = 1..n
    delta_sq: np.ndarray      # n+1 squared spatial increments, last is (L - X_n)^2


def _finish_path(scheme, n, zeta, states, rho, zinc, model, rng) -> ChainPath:
    if n < 0:
        raise ChainCapError("jump count exceeded n_max")
    zeta = zeta[:n + 1].copy()
    states = states[:n + 1].copy()
    rho_bits = rho[:n].astype(np.int64)
    zinc = zinc[:n].copy()
    delta_sq = np.empty(n + 1)
    survived = True
    for i in range(1, n + 1):
        d = model.sigma(states[i - 1]) * zinc[i - 1]
        delta_sq[i - 1] = d * d
        if states[i] <= model.L:
            survived = False
    delta_sq[n] = (model.L - states[n]) ** 2
    if np.any(delta_sq == 0.0):
        raise DegeneratePathError("zero spatial increment")
    sig_n = model.sigma(states[n])
    tau_bar = kernels.draw_levy(rng.generator, abs(model.L - states[n]) / sig_n)
    return ChainPath(scheme=scheme, n=n, zeta=zeta, rho=rho_bits, states=states,
                     z_incr=zinc, tau_bar=tau_bar,
                     hit_before_T=bool(tau_bar <= model.T - zeta[n]),
                     survived=survived, delta_sq=delta_sq)


def sample_chain_gaussian(rng: RngStream, model: DiffusionModel,
                          lambda_poisson: float, n_max: int = 60) -> ChainPath:
    """Rate-lambda Poisson jump times, reflected Gaussian steps, Levy final draw."""
    zeta = np.empty(n_max + 1)
    states = np.empty(n_max + 1)
    rho = np.empty(n_max)
    zinc = np.empty(n_max)
    p0, p1, p2 = model.params
    n = kernels.sample_gaussian_path(rng.generator, model.kind, p0, p1, p2,
                                     lambda_poisson, model.T, model.L, model.x0,
                                     n_max, zeta, states, rho, zinc)
    return _finish_path(GAUSSIAN, n, zeta, states, rho, zinc, model, rng)


def sample_chain_gig(rng: RngStream, model: DiffusionModel,
                     lambda_poisson: float, n_max: int = 60) -> ChainPath:
    """Space-first scheme of equal law: draw increments first, then GIG jump times."""
    zeta = np.empty(n_max + 1)
    states = np.empty(n_max + 1)
    rho = np.empty(n_max)
    zinc = np.empty(n_max)
    p0, p1, p2 = model.params
    n = kernels.sample_gig_path(rng.generator, model.kind, p0, p1, p2,
                                lambda_poisson, model.T, model.L, model.x0,
                                n_max, zeta, states, rho, zinc)
    return _finish_path(GIG_TIME, n, zeta, states, rho, zinc, model, rng)


def malliavin_variance(path: ChainPath) -> float:
    """M = sum of squared spatial increments, the spatial stabilizer."""
    if np.any(path.delta_sq == 0.0):
        raise DegeneratePathError("zero spatial increment in Malliavin variance")
    return float(path.delta_sq.sum())


def path_summaries(rng: RngStream, model: DiffusionModel, lambda_poisson: float,
                   n_paths: int, scheme: str, n_max: int = 60) -> np.ndarray:
    """Vectorized per-path summary used by law-equality and structural checks.

    Columns: n, zeta_1, state_1, state_n, M, survived, hit, sum|dX|, tau_bar;
    aborted paths have n = -1.
    """
    out = np.empty((n_paths, 9))
    p0, p1, p2 = model.params
    code = kernels.SCHEME_GAUSSIAN if scheme == GAUSSIAN else kernels.SCHEME_GIG
    kernels.run_chunk_path_summary(rng.generator, model.kind, p0, p1, p2,
                                   lambda_poisson, model.T, model.L, model.x0,
                                   code, n_max, out)
    return out
