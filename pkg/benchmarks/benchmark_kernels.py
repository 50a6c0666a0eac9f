"""Compare the compiled kernels against the pure-numpy fallback.

The fallback is selected with EXITIBP_DISABLE_NUMBA=1, which must be set
before the package is imported; this script therefore re-executes itself in a
subprocess for the fallback measurement. Both runs draw identical random
sequences, so the measured means must agree bit-for-bit.

Usage: python3 benchmarks/benchmark_kernels.py [n_paths]
"""

import json
import os
import subprocess
import sys
import time


def measure(n_paths: int) -> dict:
    from exitibp.estimators import ExperimentConfig, run_estimator

    results = {"backend": "fallback" if os.environ.get("EXITIBP_DISABLE_NUMBA")
               else "numba"}
    for name, estimator, f_preset in (
            ("representation", "Representation", "indicator_before_T"),
            ("time_functional", "TimeFunctional", "linear_shifted"),
            ("derivative", "Derivative", "cosine")):
        config = ExperimentConfig(
            experiment_id=f"bench-{name}", estimator=estimator,
            model_preset="tanh",
            model_params={"beta": 0.1, "alpha0": 1.0, "alpha1": 0.5},
            f_preset=f_preset, lambda_poisson=1.0, T=1.0, x0=1.0, L=0.0,
            n_samples=n_paths, seed=7, output_csv="", workers="1")
        t0 = time.perf_counter()
        stats, _ = run_estimator(config)
        t1 = time.perf_counter()   # second run excludes JIT compilation
        stats, _ = run_estimator(config)
        t2 = time.perf_counter()
        results[name] = {"mean": stats.mean, "seconds": t2 - t1,
                         "first_run_seconds": t1 - t0,
                         "paths_per_second": n_paths / (t2 - t1)}
    return results


def main() -> int:
    n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    if len(sys.argv) > 2 and sys.argv[2] == "--json":
        print(json.dumps(measure(n_paths)))
        return 0

    here = measure(n_paths)
    env = dict(os.environ, EXITIBP_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), str(n_paths), "--json"],
        env=env, capture_output=True, text=True, check=True)
    there = json.loads(out.stdout.strip().splitlines()[-1])

    print(f"{n_paths} paths per estimator, tanh model, 1 worker\n")
    print(f"{'estimator':<18}{'numba s':>10}{'fallback s':>12}"
          f"{'speedup':>9}  identical")
    for name in ("representation", "time_functional", "derivative"):
        a, b = here[name], there[name]
        same = "yes" if a["mean"] == b["mean"] else "NO"
        print(f"{name:<18}{a['seconds']:>10.3f}{b['seconds']:>12.3f}"
              f"{b['seconds'] / a['seconds']:>8.1f}x  {same}")
    mismatch = any(here[n]["mean"] != there[n]["mean"]
                   for n in ("representation", "time_functional", "derivative"))
    if mismatch:
        print("\nERROR: backends disagree", file=sys.stderr)
        return 1
    print("\nboth backends produced bit-identical estimates")
    return 0


if __name__ == "__main__":
    sys.exit(main())
