"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from trfc import kernels
from trfc.controller import ControllerConfig, IdmParams, Kinematics, ScenarioState, _Problem, plan
from trfc.simulator import DEFAULT_ERROR_MODEL
from trfc.tire_model import TireParams, force_simplified


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    kappa = rng.uniform(0.05, 0.25, 10)
    force = force_simplified(TireParams(10.0, 2.0, 0.85), kappa) + rng.normal(0.0, 0.02, 10)
    cfg = ControllerConfig()
    state = ScenarioState(Kinematics(0.0, 20.0), Kinematics(35.0, 20.0), Kinematics(-35.0, 20.0))
    problem = _Problem(cfg, DEFAULT_ERROR_MODEL, IdmParams(), state)
    a = rng.uniform(cfg.a_min, cfg.a_max, cfg.horizon_steps)
    p = problem.params.copy()
    p[kernels.P_RHO] = 1e3
    traces = problem.traces()
    return {
        "fit_sse_grad (10 samples) x1000": lambda: [
            kernels.fit_sse_grad(10.0, 2.0, 0.85, kappa, force) for _ in range(1000)],
        "plan_cost_grad (T=30) x1000": lambda: [
            kernels.plan_cost_grad(a, p, *traces) for _ in range(1000)],
        "plan_check (T=30) x1000": lambda: [kernels.plan_check(a, p, *traces) for _ in range(1000)],
        "plan_descend (one penalty stage)": lambda: kernels.plan_descend(a, p, *traces),
        "plan() end to end": lambda: plan(cfg, DEFAULT_ERROR_MODEL, IdmParams(), state),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation`")

    results = {}
    for name in ("python", "compiled"):
        kernels.use_backend(name)
        results[name] = {label: _best_of(fn, args.repeat) for label, fn in cases().items()}
    kernels.use_backend("compiled")

    width = max(len(k) for k in results["python"])
    print(f"{'case':<{width}}  {'python [ms]':>12}  {'compiled [ms]':>14}  {'speedup':>8}")
    for label in results["python"]:
        py, c = results["python"][label] * 1e3, results["compiled"][label] * 1e3
        print(f"{label:<{width}}  {py:12.3f}  {c:14.3f}  {py / c:7.1f}x")


if __name__ == "__main__":
    main()
