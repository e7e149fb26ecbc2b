"""TS against UCB1, Exp3 and fixed shading on a stationary synthetic log.

    python3 scripts/stationary_comparison.py --n 200000 --seeds 1 2 3 --out results/stationary
"""
import argparse
from dataclasses import replace
from pathlib import Path

from headerbid.data import SyntheticEnvConfig, generate_synthetic
from headerbid.harness import PolicyConfig, RunConfig, compare, write_metrics_csv

ENV = SyntheticEnvConfig(num_contexts=10, x_sigma=0.15, p_mu=1.0, p_sigma=0.5, rho=0.5)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--policies", default="ts,ucb,exp3,fixed:0.8,oracle")
    ap.add_argument("--out", type=Path, default=Path("results/stationary"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        log = generate_synthetic(replace(ENV, horizon=args.n, seed=seed)).log
        policies = [PolicyConfig.parse(s, seed=seed) for s in args.policies.split(",")]
        result = compare(log, policies, RunConfig(num_contexts=ENV.num_contexts, order_seed=seed))
        write_metrics_csv(result.metrics, args.out / f"seed{seed}.csv")
        print(f"== seed {seed}")
        print(result.report())


if __name__ == "__main__":
    main()
