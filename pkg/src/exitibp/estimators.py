"""Per-path estimator values, streaming statistics and the Monte Carlo engine.

Three unbiased estimators are provided:

* Representation: E[f(T ^ tau, X_{T ^ tau})] for general f(t, x).
* TimeFunctional: E[f(T ^ tau)] for time-only f.
* Derivative: E[f'(tau) 1{tau <= T}] for continuously differentiable f.

The engine splits the budget into fixed-size chunks, processes each chunk
with its own counter-based stream and merges the chunk statistics in chunk
index order, so results are bit-identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import math
import os
import time

import numpy as np

from . import kernels
from .chain import ChainPath, GIG_TIME
from .model import DiffusionModel, ModelError, model_preset
from .rng import RngStream
from .weights import WeightSet

Z_99 = 2.5758293035489004  # 99.5% standard normal quantile, frozen


class ConfigError(ValueError):
    """Invalid experiment configuration; reported before any sampling."""


class EstimatorFault(RuntimeError):
    """A per-path contribution came out non-finite; signals a bug upstream."""


TIME_ONLY = "TimeOnly"
TIME_SPACE = "TimeSpace"


@dataclass(frozen=True)
class TestFunction:
    """Payoff functional with cached terminal value for the shift g = f - f(T)."""
    kind: str                                # TimeOnly or TimeSpace
    eval: Callable                           # f(t) or f(t, x)
    eval_dt: Callable[[float], float]        # df/dt, used by oracles and tests
    f_at_T: float
    big_t: float
    preset: str = "custom"
    code: int = -1                           # kernel code, -1 for custom
    par: float = 0.0
    differentiable: bool = True


def test_function_preset(name: str, big_t: float, value: float = 1.0) -> TestFunction:
    """Named time-only payoffs shared by the estimators and the kernels."""
    if big_t <= 0.0:
        raise ConfigError("T must be positive")
    if name == "constant":
        return TestFunction(TIME_ONLY, lambda t: value, lambda t: 0.0,
                            value, big_t, name, kernels.F_CONSTANT, value)
    if name == "indicator_before_T":
        return TestFunction(TIME_ONLY, lambda t: 1.0 if t < big_t else 0.0,
                            lambda t: 0.0, 0.0, big_t, name,
                            kernels.F_INDICATOR, 0.0, differentiable=False)
    if name == "linear_shifted":
        return TestFunction(TIME_ONLY, lambda t: t - big_t, lambda t: 1.0,
                            0.0, big_t, name, kernels.F_LINEAR)
    if name == "cosine":
        return TestFunction(TIME_ONLY,
                            lambda t: math.cos(0.5 * math.pi * t / big_t),
                            lambda t: -0.5 * math.pi / big_t
                            * math.sin(0.5 * math.pi * t / big_t),
                            0.0, big_t, name, kernels.F_COSINE)
    if name == "polynomial":
        return TestFunction(TIME_ONLY, lambda t: (t - big_t) ** 2,
                            lambda t: 2.0 * (t - big_t),
                            0.0, big_t, name, kernels.F_POLY)
    raise ConfigError(f"unknown f preset {name!r}")


# ---------------------------------------------------------------------------
# per-path contributions (object layer; the engine uses the fused kernels)
# ---------------------------------------------------------------------------

def representation_contribution(path: ChainPath, weights: WeightSet,
                                f: TestFunction, rng: RngStream,
                                model: DiffusionModel,
                                lambda_poisson: float) -> float:
    """One draw of the representation estimator for f(t, x).

    The no-hit endpoint part uses one extra reflected Gaussian step over
    (zeta_n, T] with a fresh sign, drawn here from the supplied stream.
    """
    n = path.n
    big_t = model.T
    fx = (f.eval if f.kind == TIME_SPACE else (lambda t, x: f.eval(t)))
    term = 0.0
    if path.hit_before_T:
        term += fx(path.zeta[n] + path.tau_bar, model.L) \
            * (weights.gamma + weights.gamma_bar)
    gen = rng.generator
    r = 1.0 if gen.random() < 0.5 else 0.0
    g = gen.standard_normal()
    x_n = path.states[n]
    dt = big_t - path.zeta[n]
    anchor = r * x_n + (1.0 - r) * (2.0 * model.L - x_n)
    x_end = anchor + model.sigma(x_n) * math.sqrt(dt) * g
    if x_end >= model.L:
        term += 2.0 * (2.0 * r - 1.0) * fx(big_t, x_end) * weights.gamma
    val = math.exp(lambda_poisson * big_t) * term
    if not math.isfinite(val):
        raise EstimatorFault("non-finite representation contribution")
    return val


def time_functional_contribution(path: ChainPath, weights: WeightSet,
                                 f: TestFunction,
                                 lambda_poisson: float) -> float:
    """One draw of the time-only estimator; internally shifts to g = f - f(T)."""
    big_t = f.big_t
    val = f.f_at_T
    if path.hit_before_T and weights.gamma != 0.0:
        g = f.eval(path.zeta[path.n] + path.tau_bar) - f.f_at_T
        val += math.exp(lambda_poisson * big_t) * g \
            * weights.theta_hat * weights.gamma
    if not math.isfinite(val):
        raise EstimatorFault("non-finite time-functional contribution")
    return val


def derivative_contribution(path: ChainPath, weights: WeightSet,
                            f: TestFunction, lambda_poisson: float) -> float:
    """One draw of the derivative estimator; target E[f'(tau) 1{tau <= T}]."""
    if path.scheme != GIG_TIME:
        raise EstimatorFault("derivative estimator requires a GigTime path")
    if not f.differentiable:
        raise ConfigError("derivative estimator needs a differentiable f")
    if not path.hit_before_T:
        return 0.0
    big_t = f.big_t
    g = f.eval(path.zeta[path.n] + path.tau_bar) - f.f_at_T
    total = float(np.dot(weights.delta_sq, weights.theta_I))
    val = math.exp(lambda_poisson * big_t) * g / weights.m_var * total
    if not math.isfinite(val):
        raise EstimatorFault("non-finite derivative contribution")
    return val


# ---------------------------------------------------------------------------
# streaming statistics
# ---------------------------------------------------------------------------

@dataclass
class McStatistics:
    """Streaming central-moment accumulator (up to fourth order) with merge."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0
    min: float = math.inf
    max: float = -math.inf
    abort_count: int = 0

    @classmethod
    def from_values(cls, values: np.ndarray, abort_count: int = 0) -> "McStatistics":
        """Exact one-pass moments of a finite array (NaNs must be filtered out)."""
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return cls(abort_count=abort_count)
        mean = float(values.mean())
        d = values - mean
        return cls(count=n, mean=mean, m2=float(np.dot(d, d)),
                   m3=float((d ** 3).sum()), m4=float((d ** 4).sum()),
                   min=float(values.min()), max=float(values.max()),
                   abort_count=abort_count)

    def merge(self, other: "McStatistics") -> "McStatistics":
        """Pairwise central-moment combination (Pebay update)."""
        na, nb = self.count, other.count
        if nb == 0:
            return replace(self, abort_count=self.abort_count + other.abort_count)
        if na == 0:
            return replace(other, abort_count=self.abort_count + other.abort_count)
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        mean = self.mean + nb * d_n
        m2 = self.m2 + other.m2 + delta * d_n * na * nb
        m3 = self.m3 + other.m3 \
            + delta * d_n * d_n * na * nb * (na - nb) \
            + 3.0 * d_n * (na * other.m2 - nb * self.m2)
        m4 = self.m4 + other.m4 \
            + delta * d_n ** 3 * na * nb * (na * na - na * nb + nb * nb) \
            + 6.0 * d_n * d_n * (na * na * other.m2 + nb * nb * self.m2) \
            + 4.0 * d_n * (na * other.m3 - nb * self.m3)
        return McStatistics(count=n, mean=mean, m2=m2, m3=m3, m4=m4,
                            min=min(self.min, other.min),
                            max=max(self.max, other.max),
                            abort_count=self.abort_count + other.abort_count)

    def stderr(self) -> float:
        if self.count < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.count * (self.count - 1)))

    def ci99(self) -> tuple:
        half = Z_99 * self.stderr()
        return (self.mean - half, self.mean + half)

    def kurtosis(self) -> float:
        """Excess sample kurtosis; NaN when undefined."""
        if self.count < 2 or self.m2 == 0.0:
            return math.nan
        return self.count * self.m4 / (self.m2 * self.m2) - 3.0


# ---------------------------------------------------------------------------
# experiment configuration and the engine
# ---------------------------------------------------------------------------

ESTIMATOR_NAMES = ("Representation", "TimeFunctional", "Derivative",
                   "OracleQuadrature", "OracleEuler")

_REQUIRED_KEYS = ("experiment_id", "estimator", "model_preset", "f_preset",
                  "lambda", "T", "x0", "L", "n_samples", "seed", "output_csv")
_OPTIONAL_KEYS = ("chunk_size", "workers", "n_max", "median_of_means_blocks",
                  "dump_paths", "f_params", "euler_n_steps", "oracle_mode",
                  "include_atom")


@dataclass
class ExperimentConfig:
    experiment_id: str
    estimator: str
    model_preset: str
    model_params: dict
    f_preset: str
    lambda_poisson: float          # resolved; "default" becomes 1/T
    T: float
    x0: float
    L: float
    n_samples: int
    seed: int
    output_csv: str
    chunk_size: int = 4096
    workers: str = "auto"
    n_max: int = 60
    median_of_means_blocks: Optional[int] = None
    dump_paths: Optional[str] = None
    f_params: dict = field(default_factory=dict)
    euler_n_steps: int = 10000
    oracle_mode: str = "functional"    # or "derivative", for the oracle rows
    include_atom: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = [k for k in _REQUIRED_KEYS if k not in raw]
        if missing:
            raise ConfigError(f"missing config field: {missing[0]!r}")
        est = raw["estimator"]
        if est not in ESTIMATOR_NAMES:
            raise ConfigError(f"unknown estimator {est!r} (have {ESTIMATOR_NAMES})")
        mp = raw["model_preset"]
        if isinstance(mp, str):
            m_name, m_params = mp, {}
        elif isinstance(mp, dict) and "name" in mp:
            m_name = mp["name"]
            m_params = {k: v for k, v in mp.items() if k != "name"}
        else:
            raise ConfigError("model_preset must be a name or {name, params...}")
        try:
            big_t = float(raw["T"])
            x0 = float(raw["x0"])
            level = float(raw["L"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric field: {exc}") from exc
        if big_t <= 0.0:
            raise ConfigError("T must be positive")
        if not x0 > level:
            raise ConfigError("x0 must exceed L")
        lam = raw["lambda"]
        if lam == "default":
            lam = 1.0 / big_t
        lam = float(lam)
        if lam <= 0.0:
            raise ConfigError("lambda must be positive")
        n_samples = int(raw["n_samples"])
        if n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        chunk_size = int(raw.get("chunk_size", 4096))
        if chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        n_max = int(raw.get("n_max", 60))
        if n_max < 1:
            raise ConfigError("n_max must be >= 1")
        mom = raw.get("median_of_means_blocks")
        if mom is not None:
            mom = int(mom)
            if mom < 1:
                raise ConfigError("median_of_means_blocks must be >= 1")
        workers = raw.get("workers", "auto")
        if workers != "auto":
            workers = int(workers)
            if workers < 1:
                raise ConfigError("workers must be >= 1")
        mode = raw.get("oracle_mode", "functional")
        if mode not in ("functional", "derivative"):
            raise ConfigError("oracle_mode must be functional or derivative")
        return cls(experiment_id=str(raw["experiment_id"]), estimator=est,
                   model_preset=m_name, model_params=m_params,
                   f_preset=str(raw["f_preset"]), lambda_poisson=lam,
                   T=big_t, x0=x0, L=level, n_samples=n_samples,
                   seed=int(raw["seed"]), output_csv=str(raw["output_csv"]),
                   chunk_size=chunk_size, workers=workers, n_max=n_max,
                   median_of_means_blocks=mom,
                   dump_paths=raw.get("dump_paths"),
                   f_params=dict(raw.get("f_params", {})),
                   euler_n_steps=int(raw.get("euler_n_steps", 10000)),
                   oracle_mode=mode,
                   include_atom=bool(raw.get("include_atom", True)))

    def build_model(self) -> DiffusionModel:
        try:
            return model_preset(self.model_preset, self.model_params,
                                L=self.L, x0=self.x0, T=self.T)
        except (ModelError, TypeError) as exc:
            raise ConfigError(f"bad model_preset: {exc}") from exc

    def build_test_function(self) -> TestFunction:
        value = float(self.f_params.get("value", 1.0))
        extra = set(self.f_params) - {"value"}
        if extra:
            raise ConfigError(f"unknown f_params keys: {sorted(extra)}")
        return test_function_preset(self.f_preset, self.T, value)


def resolve_workers(config_workers) -> int:
    env = os.environ.get("EXIT_IBP_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError("EXIT_IBP_THREADS must be an integer") from exc
        if n < 1:
            raise ConfigError("EXIT_IBP_THREADS must be >= 1")
        return n
    if config_workers == "auto":
        return min(4, os.cpu_count() or 1)
    return int(config_workers)


_EST_CODES = {"Representation": kernels.EST_REPRESENTATION,
              "TimeFunctional": kernels.EST_TIME_FUNCTIONAL,
              "Derivative": kernels.EST_DERIVATIVE}


def _chunk_plan(n_samples: int, chunk_size: int):
    sizes = []
    left = n_samples
    while left > 0:
        sizes.append(min(chunk_size, left))
        left -= sizes[-1]
    return sizes


def run_estimator(config: ExperimentConfig) -> tuple:
    """Run the configured Monte Carlo experiment.

    Returns (McStatistics, metadata dict). Chunk k is always processed with
    RngStream(seed, k) and merged in k order, so the result is a pure
    function of the config.
    """
    model = config.build_model()
    f = config.build_test_function()
    if config.estimator == "Derivative" and not f.differentiable:
        raise ConfigError("derivative estimator needs a differentiable f preset")
    if config.estimator == "TimeFunctional" and f.kind != TIME_ONLY:
        raise ConfigError("time functional needs a time-only f preset")
    if config.estimator not in _EST_CODES:
        raise ConfigError(f"run_estimator does not handle {config.estimator}; "
                          "use the oracle module")
    est_code = _EST_CODES[config.estimator]
    scheme = (kernels.SCHEME_GIG if config.estimator == "Derivative"
              else kernels.SCHEME_GAUSSIAN)
    p0, p1, p2 = model.params
    sizes = _chunk_plan(config.n_samples, config.chunk_size)

    def do_chunk(idx_size):
        idx, size = idx_size
        gen = RngStream(config.seed, idx).generator
        out = np.empty(size)
        aborts = kernels.run_chunk(gen, est_code, model.kind, p0, p1, p2,
                                   config.lambda_poisson, model.T, model.L,
                                   model.x0, scheme, config.n_max,
                                   f.code, f.par, out)
        finite = out[~np.isnan(out)]
        if not np.all(np.isfinite(finite)):
            raise EstimatorFault("non-finite contribution in chunk %d" % idx)
        return McStatistics.from_values(finite, abort_count=aborts)

    t0 = time.perf_counter()
    n_workers = resolve_workers(config.workers)
    jobs = list(enumerate(sizes))
    if n_workers == 1 or len(jobs) == 1:
        chunk_stats = [do_chunk(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            chunk_stats = list(pool.map(do_chunk, jobs))
    stats = McStatistics()
    for cs in chunk_stats:
        stats = stats.merge(cs)
    seconds = time.perf_counter() - t0

    metadata = {
        "experiment_id": config.experiment_id,
        "estimator": config.estimator,
        "model_preset": model.preset,
        "f_preset": f.preset,
        "lambda": config.lambda_poisson,
        "T": model.T, "x0": model.x0, "L": model.L,
        "n_samples": config.n_samples,
        "mean": stats.mean, "stderr": stats.stderr(),
        "ci99_lo": stats.ci99()[0], "ci99_hi": stats.ci99()[1],
        "kurtosis": stats.kurtosis(),
        "abort_count": stats.abort_count,
        "seconds": seconds,
        "workers": n_workers,
        "bias_flag": stats.abort_count > 0,
    }
    if config.median_of_means_blocks:
        k = config.median_of_means_blocks
        block_means = _median_of_means_blocks(chunk_stats, k)
        metadata["mom_mean"] = float(np.median(block_means))
        metadata["mom_stderr"] = (float(np.std(block_means, ddof=1)
                                        / math.sqrt(len(block_means)))
                                  if len(block_means) > 1 else math.inf)
    return stats, metadata


def _median_of_means_blocks(chunk_stats, k: int) -> np.ndarray:
    """Group chunks into k contiguous blocks and return the block means."""
    k = min(k, len(chunk_stats))
    bounds = np.linspace(0, len(chunk_stats), k + 1).astype(int)
    means = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        block = McStatistics()
        for cs in chunk_stats[lo:hi]:
            block = block.merge(cs)
        if block.count:
            means.append(block.mean)
    return np.asarray(means)


def dump_path_summaries(config: ExperimentConfig, dest: str) -> int:
    """Write one CSV row per sampled path; returns the number of rows."""
    model = config.build_model()
    scheme = (kernels.SCHEME_GIG if config.estimator == "Derivative"
              else kernels.SCHEME_GAUSSIAN)
    scheme_name = "gig" if scheme == kernels.SCHEME_GIG else "gaussian"
    p0, p1, p2 = model.params
    sizes = _chunk_plan(config.n_samples, config.chunk_size)
    rows = 0
    with open(dest, "w", newline="") as fh:
        fh.write("scheme,n,zeta_1,state_1,state_n,m_var,abs_dx_sum,"
                 "tau_bar,survived,hit\n")
        for idx, size in enumerate(sizes):
            gen = RngStream(config.seed, idx).generator
            out = np.empty((size, 9))
            kernels.run_chunk_path_summary(gen, model.kind, p0, p1, p2,
                                           config.lambda_poisson, model.T,
                                           model.L, model.x0, scheme,
                                           config.n_max, out)
            for row in out:
                n = int(row[0])
                if n < 0:
                    fh.write(f"{scheme_name},-1,,,,,,,,\n")
                else:
                    z1 = "" if math.isnan(row[1]) else repr(float(row[1]))
                    s1 = "" if math.isnan(row[2]) else repr(float(row[2]))
                    fh.write(f"{scheme_name},{n},{z1},{s1},"
                             f"{float(row[3])!r},{float(row[4])!r},"
                             f"{float(row[7])!r},{float(row[8])!r},"
                             f"{int(row[5])},{int(row[6])}\n")
                rows += 1
    return rows
