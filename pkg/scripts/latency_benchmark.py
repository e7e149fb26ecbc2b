"""Per-impression decide+update latency and particle-count scaling."""
import argparse
import time

import numpy as np

from headerbid.data import SyntheticEnvConfig, generate_synthetic
from headerbid.harness import PolicyConfig, Replay, RunConfig
from headerbid.particles import FilterConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--contexts", type=int, default=100)
    ap.add_argument("--particles", type=int, nargs="+", default=[100, 200, 400, 800])
    args = ap.parse_args()
    log = generate_synthetic(SyntheticEnvConfig(num_contexts=10, horizon=args.n, seed=0)).log
    print("K,p50_us,p90_us,p99_us,mean_us")
    means = []
    for k in args.particles:
        pc = PolicyConfig("ts", filter=FilterConfig(num_particles=k))
        t0 = time.perf_counter()
        replay = Replay(log, pc, RunConfig(num_contexts=args.contexts)).advance()
        lat = replay.metrics().latency_ns
        mean = (time.perf_counter() - t0) / args.n * 1e6
        means.append(lat["p50"] / 1e3)
        print(f"{k},{lat['p50'] / 1e3:.1f},{lat['p90'] / 1e3:.1f},{lat['p99'] / 1e3:.1f},{mean:.1f}")
    ks = np.asarray(args.particles, dtype=float)
    if ks.size > 2:
        r2 = np.corrcoef(ks, means)[0, 1] ** 2
        print(f"affine fit of median latency on K: R^2 = {r2:.4f}")


if __name__ == "__main__":
    main()
