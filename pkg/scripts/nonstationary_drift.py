"""Chronological replay under sinusoidal drift: particle drift on vs. off.

    python3 scripts/nonstationary_drift.py --epsilons 0 0.001 0.005 0.02
"""
import argparse
from dataclasses import replace
from pathlib import Path

from headerbid.data import SyntheticEnvConfig, generate_synthetic
from headerbid.harness import PolicyConfig, RunConfig, compare, write_metrics_csv
from headerbid.particles import FilterConfig

ENV = SyntheticEnvConfig(num_contexts=10, x_sigma=0.15, p_mu=1.0, p_sigma=0.5, rho=0.5,
                         drift="sinusoidal", amplitude=0.5, periods=1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.0, 0.005])
    ap.add_argument("--drift", choices=("sinusoidal", "random_walk"), default="sinusoidal")
    ap.add_argument("--out", type=Path, default=Path("results/nonstationary"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    env = replace(ENV, drift=args.drift, horizon=args.n)
    rc = RunConfig(order="chronological", num_contexts=env.num_contexts)
    for seed in args.seeds:
        log = generate_synthetic(replace(env, seed=seed)).log
        policies = [PolicyConfig("ts", seed=seed, label=f"ts eps={e:g}", filter=FilterConfig(epsilon=e))
                    for e in args.epsilons]
        policies.append(PolicyConfig("oracle"))
        result = compare(log, policies, rc)
        write_metrics_csv(result.metrics, args.out / f"seed{seed}.csv")
        print(f"== seed {seed}")
        print(result.report())


if __name__ == "__main__":
    main()
