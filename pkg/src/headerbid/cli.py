"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Set ``HEADERBID_LOG``
(e.g. ``DEBUG``) to change log verbosity.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

from .contexts import ContextBinner
from .data import (DataError, SyntheticEnvConfig, build_ab_split, dataset_stats, generate_synthetic,
                   read_impressions, read_raw_bids, write_impressions)
from .harness import (PolicyConfig, Replay, RunConfig, SnapshotError, compare, write_metrics_csv)
from .particles import FilterConfig

log = logging.getLogger("headerbid")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config file --------------------------------------------------------------

_RUN_KEYS = {"dataset": str, "order": str, "seed": int, "checkpoint_every": int, "num_contexts": int,
             "binning": str, "warmup": int, "out": str, "policies": str}
_FILTER_KEYS = {"num_particles": int, "epsilon": float, "ess_threshold": float}
_POLICY_KEYS = {"kind": str, "seed": int, "num_arms": int, "gamma": float, "reward_bound": float,
                "alpha": float}


def load_config(path) -> tuple[dict, list[PolicyConfig]]:
    """Read an INI run file.

    ``[run]`` holds run-level keys; each ``[policy]`` or ``[policy:<label>]``
    section defines one policy.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise DataError(f"cannot read config file {path}")
    run = {}
    if cp.has_section("run"):
        for key, raw in cp["run"].items():
            if key not in _RUN_KEYS:
                raise UsageError(f"{path}: unknown key {key!r} in [run]")
            run[key] = _RUN_KEYS[key](raw)
    policies = []
    for name in cp.sections():
        if name != "policy" and not name.startswith("policy:"):
            if name != "run":
                raise UsageError(f"{path}: unknown section [{name}]")
            continue
        sec = cp[name]
        kw, fkw = {}, {}
        for key, raw in sec.items():
            if key in _POLICY_KEYS:
                kw[key] = _POLICY_KEYS[key](raw)
            elif key in _FILTER_KEYS:
                fkw[key] = _FILTER_KEYS[key](raw)
            elif key == "contextual":
                kw[key] = sec.getboolean(key)
            elif key in ("prior_mu_range", "prior_log_sigma_range"):
                fkw[key] = tuple(float(v) for v in raw.split(","))
            else:
                raise UsageError(f"{path}: unknown key {key!r} in [{name}]")
        if name.startswith("policy:"):
            kw["label"] = name.split(":", 1)[1]
        kw["filter"] = FilterConfig(**fkw)
        policies.append(PolicyConfig(**kw))
    return run, policies


# -- subcommands --------------------------------------------------------------


def _cmd_gen_synthetic(args):
    cfg = SyntheticEnvConfig(
        num_contexts=args.contexts, horizon=args.n, seed=args.seed, x_mu=args.x_mu,
        x_sigma=args.x_sigma, p_mu=args.p_mu, p_sigma=args.p_sigma, rho=args.rho,
        drift=args.drift, amplitude=args.amplitude, periods=args.periods, walk_step=args.walk_step,
    )
    ds = generate_synthetic(cfg)
    write_impressions(ds.log, args.out)
    if args.truth_out:
        with open(args.truth_out, "w") as fh:
            fh.write("id,context,mu,sigma\n")
            for i, c, m, s in zip(ds.log.ids.tolist(), ds.contexts.tolist(), ds.mu.tolist(), ds.sigma.tolist()):
                fh.write(f"{i},{c},{m!r},{s!r}\n")
    print(f"wrote {len(ds.log)} impressions to {args.out}")


def _cmd_build_ab(args):
    records = read_raw_bids(args.raw)
    out = build_ab_split(records, args.seed, prob_a=args.prob_a, scale=args.scale)
    write_impressions(out, args.out)
    print(f"kept {len(out)} auctions; wrote {args.out}")


def _cmd_stats(args):
    data = read_impressions(args.dataset)
    binner = ContextBinner.fit(data.prices, args.contexts) if args.contexts else None
    print(dataset_stats(data, binner).format())


def _gather(args, multi: bool):
    try:
        return _gather_unchecked(args, multi)
    except ValueError as e:
        if isinstance(e, DataError):
            raise
        raise UsageError(str(e)) from None


def _gather_unchecked(args, multi: bool):
    run, policies = load_config(args.config) if args.config else ({}, [])
    dataset = args.dataset or run.get("dataset")
    if not dataset:
        raise UsageError("--dataset is required (or 'dataset' in the [run] section)")
    out = args.out or run.get("out")
    seed = args.seed if args.seed is not None else run.get("seed", 0)
    rc = RunConfig(
        order=args.order or run.get("order", "shuffled"),
        order_seed=seed,
        num_contexts=args.contexts or run.get("num_contexts", 100),
        checkpoint_every=args.checkpoint_every or run.get("checkpoint_every", 1000),
        binning=run.get("binning", "offline"),
        warmup=run.get("warmup", 10_000),
    )
    filt = {}
    if args.particles is not None:
        filt["num_particles"] = args.particles
    if args.epsilon is not None:
        filt["epsilon"] = args.epsilon
    extra = {"seed": seed, "filter": FilterConfig(**filt)}
    if args.arms is not None:
        extra["num_arms"] = args.arms
    if args.gamma is not None:
        extra["gamma"] = args.gamma
    if args.global_bandit:
        extra["contextual"] = False

    names = getattr(args, "policies", None) or getattr(args, "policy", None) or run.get("policies")
    if names:
        policies = [PolicyConfig.parse(s, **extra) for s in names.split(",") if s.strip()]
    elif not policies:
        policies = [PolicyConfig.parse("ts", **extra)]
    if not multi and len(policies) != 1:
        raise UsageError("run takes exactly one policy; use compare for several")
    return Path(dataset), out, rc, policies


def _cmd_run(args):
    dataset, out, rc, (policy,) = _gather(args, multi=False)
    data = read_impressions(dataset)
    if args.resume:
        replay = Replay.restore(args.resume, data)
    else:
        replay = Replay(data, policy, rc)
    replay.advance(args.stop_at)
    if args.snapshot_out:
        replay.snapshot(args.snapshot_out)
        print(f"snapshot at n={replay.position} written to {args.snapshot_out}")
    m = replay.metrics()
    if out and m.checkpoints:
        write_metrics_csv([m], out)
    if m.checkpoints:
        f = m.final
        print(f"{m.policy}: n={f.n} avg_reward={f.avg_reward:.6f} success={f.success_rate:.2%} "
              f"oracle={f.oracle_avg_reward:.6f} regret={f.regret:.4f}")
    if m.latency_ns:
        print(f"decide+update median {m.latency_ns['p50'] / 1e6:.4f} ms")


def _cmd_compare(args):
    dataset, out, rc, policies = _gather(args, multi=True)
    data = read_impressions(dataset)
    result = compare(data, policies, rc)
    if out:
        write_metrics_csv(result.metrics, out)
    print(result.report())


def _cmd_snapshot_tools(args):
    with open(args.snapshot) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as e:
        raise SnapshotError(f"{args.snapshot}: unreadable snapshot ({e})") from None
    if args.action == "inspect":
        print(f"format={header.get('format')} version={header.get('version')} "
              f"policy={header.get('policy', {}).get('label')} position={header.get('position')} "
              f"contexts={len(lines) - 1}")
    else:
        if not args.dataset:
            raise UsageError("verify needs --dataset")
        replay = Replay.restore(args.snapshot, read_impressions(args.dataset))
        print(f"ok: restorable at n={replay.position}")


# -- parser -------------------------------------------------------------------


def _run_flags(p: argparse.ArgumentParser, multi: bool):
    p.add_argument("--dataset", help="impression CSV (id,timestamp_ms,p,x)")
    p.add_argument("--config", help="INI run configuration")
    if multi:
        p.add_argument("--policies", help="comma-separated: ts,ucb,exp3,fixed:0.8,oracle")
    else:
        p.add_argument("--policy", help="ts | ucb | exp3 | fixed[:alpha] | oracle")
    p.add_argument("--order", choices=("shuffled", "chronological"))
    p.add_argument("--seed", type=int)
    p.add_argument("--contexts", type=int, help="number of price contexts C")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--particles", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--arms", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--global-bandit", action="store_true", help="one bandit for all contexts")
    p.add_argument("--out", help="metrics CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="headerbid", description="Bid optimization for header-bidding auctions.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-synthetic", help="draw a synthetic auction log")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=100_000)
    g.add_argument("--contexts", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--x-mu", type=float, default=0.0)
    g.add_argument("--x-sigma", type=float, default=0.5)
    g.add_argument("--p-mu", type=float, default=0.5)
    g.add_argument("--p-sigma", type=float, default=0.5)
    g.add_argument("--rho", type=float, default=0.5)
    g.add_argument("--drift", choices=("constant", "sinusoidal", "random_walk"), default="constant")
    g.add_argument("--amplitude", type=float, default=0.5)
    g.add_argument("--periods", type=float, default=1.0)
    g.add_argument("--walk-step", type=float, default=0.005)
    g.add_argument("--truth-out", help="also write true per-impression parameters")
    g.set_defaults(func=_cmd_gen_synthetic, parser=g)

    b = sub.add_parser("build-ab", help="build impressions from raw bids by A/B advertiser split")
    b.add_argument("--raw", required=True, help="CSV auction_id,advertiser_id,bid,timestamp_ms")
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--prob-a", type=float, default=0.5)
    b.add_argument("--scale", type=float, default=1.0)
    b.set_defaults(func=_cmd_build_ab, parser=b)

    s = sub.add_parser("stats", help="summarize an impression CSV")
    s.add_argument("--dataset", required=True)
    s.add_argument("--contexts", type=int)
    s.set_defaults(func=_cmd_stats, parser=s)

    r = sub.add_parser("run", help="replay one policy")
    _run_flags(r, multi=False)
    r.add_argument("--stop-at", type=int, help="stop after this many impressions")
    r.add_argument("--snapshot-out", help="write a resumable snapshot when stopping")
    r.add_argument("--resume", help="continue from a snapshot")
    r.set_defaults(func=_cmd_run, parser=r)

    c = sub.add_parser("compare", help="replay several policies on the same order")
    _run_flags(c, multi=True)
    c.set_defaults(func=_cmd_compare, parser=c)

    t = sub.add_parser("snapshot-tools", help="inspect or verify a snapshot")
    t.add_argument("action", choices=("inspect", "verify"))
    t.add_argument("--snapshot", required=True)
    t.add_argument("--dataset")
    t.set_defaults(func=_cmd_snapshot_tools, parser=t)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HEADERBID_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as e:
        args.parser.print_usage(sys.stderr)
        print(f"headerbid: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SnapshotError, OSError, ValueError) as e:
        print(f"headerbid: error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
