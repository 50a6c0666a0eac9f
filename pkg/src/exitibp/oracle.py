"""Independent ground-truth engines.

Closed-form first-passage densities for constant coefficients, adaptive
Simpson quadrature against them, and a fine-grid Euler scheme with a
Brownian-bridge exit correction for non-constant coefficients.  The Euler
oracle is deliberately biased-but-simple; consumers treat it as a band.
"""

from dataclasses import dataclass

import math

import numpy as np

from . import kernels
from .estimators import McStatistics, TestFunction
from .model import DiffusionModel
from .rng import RngStream


class OracleError(ValueError):
    pass


class QuadratureDepthError(RuntimeError):
    """Adaptive refinement hit max_depth before reaching the tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    max_depth: int = 40


def _simpson(f, a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, b, fa, fm, fb, whole, tol, depth, max_depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = _simpson(f, a, m, fa, flm, fm)
    right = _simpson(f, m, b, fm, frm, fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if depth >= max_depth:
        raise QuadratureDepthError(f"max depth {max_depth} reached on [{a}, {b}]")
    return (_adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth)
            + _adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth))


def adaptive_simpson(f, a: float, b: float,
                     spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integrate f on [a, b] to abs_tol with adaptive Simpson refinement."""
    if not b > a:
        raise OracleError("need b > a")
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = _simpson(f, a, b, fa, fm, fb)
    return _adaptive(f, a, b, fa, fm, fb, whole, spec.abs_tol, 0, spec.max_depth)


def _require_constant(model: DiffusionModel) -> tuple:
    if model.kind != kernels.MODEL_CONSTANT:
        raise OracleError("closed-form densities need constant coefficients")
    b0, a0, _ = model.params
    return b0, a0


def levy_hitting_density(model: DiffusionModel, s: float) -> float:
    """First-passage density of driftless constant-sigma diffusion at s.

    c / sqrt(2 pi s^3) * exp(-c^2 / (2 s)) with c = (x0 - L) / sigma.
    """
    b0, a0 = _require_constant(model)
    if b0 != 0.0:
        raise OracleError("levy_hitting_density needs b = 0")
    if s <= 0.0:
        return 0.0
    c = (model.x0 - model.L) / math.sqrt(a0)
    return c / math.sqrt(2.0 * math.pi * s ** 3) * math.exp(-c * c / (2.0 * s))


def drifted_hitting_density(model: DiffusionModel, s: float) -> float:
    """First-passage density with constant drift b and volatility sigma:

    d / (sigma sqrt(2 pi s^3)) * exp(-(d + b s)^2 / (2 sigma^2 s)), d = x0 - L.
    """
    b0, a0 = _require_constant(model)
    if s <= 0.0:
        return 0.0
    d = model.x0 - model.L
    sig = math.sqrt(a0)
    return d / (sig * math.sqrt(2.0 * math.pi * s ** 3)) \
        * math.exp(-(d + b0 * s) ** 2 / (2.0 * a0 * s))


def hitting_probability(model: DiffusionModel, t: float,
                        spec: QuadratureSpec = QuadratureSpec()) -> float:
    """P(tau <= t) for the constant model, by quadrature of the exact density."""
    b0, _ = _require_constant(model)
    density = levy_hitting_density if b0 == 0.0 else drifted_hitting_density
    return adaptive_simpson(lambda s: density(model, s), 1e-12, t, spec)


def functional_by_quadrature(model: DiffusionModel, f: TestFunction,
                             mode: str = "functional",
                             include_atom: bool = True,
                             spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Exact targets for the constant model.

    mode "functional": int_0^T f(s) p(s) ds, plus f(T) P(tau > T) when the
    atom at T is requested. mode "derivative": int_0^T f'(s) p(s) ds.
    """
    b0, _ = _require_constant(model)
    density = levy_hitting_density if b0 == 0.0 else drifted_hitting_density
    big_t = model.T
    if mode == "derivative":
        integrand = lambda s: f.eval_dt(s) * density(model, s)
        return adaptive_simpson(integrand, 1e-12, big_t, spec)
    if mode != "functional":
        raise OracleError("mode must be functional or derivative")
    integrand = lambda s: f.eval(s) * density(model, s)
    value = adaptive_simpson(integrand, 1e-12, big_t, spec)
    if include_atom:
        p_hit = adaptive_simpson(lambda s: density(model, s), 1e-12, big_t, spec)
        value += f.f_at_T * (1.0 - p_hit)
    return value


EULER_FUNCTIONAL = "Functional"
EULER_DERIVATIVE = "Derivative"


def euler_bridge_both(model: DiffusionModel, f: TestFunction, n_paths: int,
                      n_steps: int, rng: RngStream,
                      chunk_size: int = 65536) -> tuple:
    """One Euler pass returning (functional stats, derivative stats).

    Chunked with RngStream(seed, chunk_index) like the main engine, merged
    in index order; deterministic for a given stream seed.
    """
    if n_steps < 1 or n_paths < 1:
        raise OracleError("n_paths and n_steps must be >= 1")
    if f.code < 0:
        raise OracleError("Euler oracle needs a preset test function")
    p0, p1, p2 = model.params
    stats_f = McStatistics()
    stats_d = McStatistics()
    left = n_paths
    idx = 0
    while left > 0:
        size = min(chunk_size, left)
        gen = RngStream(rng.seed, rng.stream_id + idx).generator
        out_f = np.empty(size)
        out_d = np.empty(size)
        kernels.run_chunk_euler(gen, model.kind, p0, p1, p2, model.T, model.L,
                                model.x0, f.code, f.par, n_steps, out_f, out_d)
        stats_f = stats_f.merge(McStatistics.from_values(out_f))
        stats_d = stats_d.merge(McStatistics.from_values(out_d))
        left -= size
        idx += 1
    return stats_f, stats_d


def euler_bridge_estimate(model: DiffusionModel, f: TestFunction, mode: str,
                          n_paths: int, n_steps: int,
                          rng: RngStream) -> McStatistics:
    """Euler-Maruyama baseline with Brownian-bridge exit correction.

    mode Functional averages f(tau_hat ^ T); mode Derivative averages
    f'(tau_hat) 1{hit}. Hit times use the midpoint of the killing step.
    """
    stats_f, stats_d = euler_bridge_both(model, f, n_paths, n_steps, rng)
    if mode == EULER_FUNCTIONAL:
        return stats_f
    if mode == EULER_DERIVATIVE:
        return stats_d
    raise OracleError("mode must be Functional or Derivative")
