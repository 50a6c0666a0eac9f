"""Diffusion coefficient models and validation of the ellipticity assumptions."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import math

import numpy as np

from . import kernels


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficients of dX = b(X)dt + sigma(X)dW with level L, start x0, horizon T.

    a = sigma^2; derivatives are supplied analytically by the presets.
    Immutable after construction, safe to share across workers.
    """

    b: Callable[[float], float]
    b_prime: Callable[[float], float]
    a: Callable[[float], float]
    a_prime: Callable[[float], float]
    a_double_prime: Callable[[float], float]
    a_lower: float
    a_upper: float
    L: float
    x0: float
    T: float
    preset: str = "custom"
    # encoding consumed by the numba kernels
    kind: int = kernels.MODEL_CONSTANT
    params: tuple = (0.0, 1.0, 0.0)

    def sigma(self, y: float) -> float:
        return math.sqrt(self.a(y))


@dataclass
class ValidationReport:
    passed: bool
    failures: list = field(default_factory=list)

    def fail(self, message: str, point: Optional[float] = None) -> None:
        self.passed = False
        self.failures.append((message, point))

    def __str__(self) -> str:
        if self.passed:
            return "assumptions OK"
        msgs = "; ".join(f"{m} (at y={p})" if p is not None else m
                         for m, p in self.failures[:5])
        return f"assumption violations: {msgs}"


def constant_model(b0: float = 0.0, a0: float = 1.0, L: float = 0.0,
                   x0: float = 1.0, T: float = 1.0) -> DiffusionModel:
    if a0 <= 0.0:
        raise ModelError("constant preset needs a0 > 0")
    return DiffusionModel(
        b=lambda y: b0, b_prime=lambda y: 0.0,
        a=lambda y: a0, a_prime=lambda y: 0.0, a_double_prime=lambda y: 0.0,
        a_lower=a0, a_upper=a0, L=L, x0=x0, T=T,
        preset="constant", kind=kernels.MODEL_CONSTANT, params=(b0, a0, 0.0))


def tanh_model(beta: float = 0.1, alpha0: float = 1.0, alpha1: float = 0.5,
               L: float = 0.0, x0: float = 1.0, T: float = 1.0) -> DiffusionModel:
    """Affine-tanh family: b(y) = beta*tanh(y), a(y) = alpha0 + alpha1*tanh(y)."""
    if not (alpha0 > alpha1 >= 0.0):
        raise ModelError("tanh preset needs alpha0 > alpha1 >= 0")

    def a(y):
        return alpha0 + alpha1 * math.tanh(y)

    def a_prime(y):
        return alpha1 / math.cosh(y) ** 2

    def a_double_prime(y):
        return -2.0 * alpha1 * math.tanh(y) / math.cosh(y) ** 2

    return DiffusionModel(
        b=lambda y: beta * math.tanh(y),
        b_prime=lambda y: beta / math.cosh(y) ** 2,
        a=a, a_prime=a_prime, a_double_prime=a_double_prime,
        a_lower=alpha0 - alpha1, a_upper=alpha0 + alpha1, L=L, x0=x0, T=T,
        preset="tanh", kind=kernels.MODEL_TANH, params=(beta, alpha0, alpha1))


_PRESETS = {"constant": constant_model, "tanh": tanh_model}


def model_preset(name: str, params: Optional[dict] = None, *, L: float = 0.0,
                 x0: float = 1.0, T: float = 1.0) -> DiffusionModel:
    """Build a named preset; ``params`` holds the coefficient parameters only."""
    if name not in _PRESETS:
        raise ModelError(f"unknown model preset {name!r} (have {sorted(_PRESETS)})")
    return _PRESETS[name](**(params or {}), L=L, x0=x0, T=T)


def default_grid(model: DiffusionModel, n: int = 2001) -> np.ndarray:
    return np.linspace(model.L - 5.0, model.x0 + 5.0, n)


def validate_assumptions(model: DiffusionModel,
                         grid: Optional[np.ndarray] = None) -> ValidationReport:
    """Check ellipticity bounds, x0 > L and analytic-vs-FD derivative consistency.

    Finite differences use relative step 1e-5 and tolerance 1e-5*(1+|value|).
    """
    if grid is None:
        grid = default_grid(model)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ModelError("validation grid must be nonempty")
    report = ValidationReport(passed=True)
    if not model.x0 > model.L:
        report.fail(f"x0={model.x0} must exceed L={model.L}")
    step = 1e-5
    tol = 1e-5
    for y in grid:
        ay = model.a(y)
        if ay <= 0.0:
            report.fail("a(y) <= 0, sigma undefined", y)
            break
        if not (model.a_lower - tol <= ay <= model.a_upper + tol):
            report.fail(f"ellipticity bound violated: a(y)={ay}", y)
            break
        h = step * (1.0 + abs(y))
        fd_b = (model.b(y + h) - model.b(y - h)) / (2.0 * h)
        if abs(fd_b - model.b_prime(y)) > tol * (1.0 + abs(model.b_prime(y))):
            report.fail("b_prime inconsistent with b", y)
            break
        fd_a = (model.a(y + h) - model.a(y - h)) / (2.0 * h)
        if abs(fd_a - model.a_prime(y)) > tol * (1.0 + abs(model.a_prime(y))):
            report.fail("a_prime inconsistent with a", y)
            break
        fd_app = (model.a(y + h) - 2.0 * ay + model.a(y - h)) / (h * h)
        if abs(fd_app - model.a_double_prime(y)) > 1e-4 * (1.0 + abs(model.a_double_prime(y))):
            report.fail("a_double_prime inconsistent with a", y)
            break
    return report


def coefficients_at(model: DiffusionModel, y: float) -> tuple:
    """(b, b', a, a', a'', sigma) at y."""
    ay = model.a(y)
    return (model.b(y), model.b_prime(y), ay, model.a_prime(y),
            model.a_double_prime(y), math.sqrt(ay))
