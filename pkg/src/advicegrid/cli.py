"""Command line entry points: train, eval, resume, render, analyze."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .analysis import export_correlations, read_episode_jsonl, write_csr_csv
from .goals import builtin_synonym_path, load_synonym_table, render_instruction
from .gridworld import EnvConfig, new_env
from .harness import (
    RunConfig,
    evaluate_mt,
    evaluate_synonyms,
    evaluate_zsl,
    load_run_checkpoint,
    resume_training,
    run_training,
)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def cmd_train(args):
    cfg = RunConfig.from_file(args.config)
    result = run_training(cfg, seed=args.seed, out_dir=args.output_dir, quiet=args.quiet)
    print(f"final MT success: {result.final_mt:.3f} ({result.frames} frames)")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_resume(args):
    result = resume_training(args.checkpoint, quiet=args.quiet)
    print(f"final MT success: {result.final_mt:.3f} ({result.frames} frames)")
    return 0


def _write_episodes(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        for success, length in report.episodes:
            fh.write(json.dumps({"success": bool(success), "length": int(length)}) + "\n")


def cmd_eval(args):
    cfg, gs, model, online, _, meta = load_run_checkpoint(args.checkpoint)
    rng = _rng(args.seed)
    if args.suite == "mt":
        report = evaluate_mt(model, online, cfg, gs, meta["train_goal_asts"],
                             args.episodes, rng)
    elif args.suite == "zsl":
        report = evaluate_zsl(model, online, cfg, gs, meta["zsl_goal_asts"],
                              max(args.episodes // max(len(meta["zsl_goal_asts"]), 1), 1), rng)
    else:
        table = load_synonym_table(args.synonyms or builtin_synonym_path())
        report = evaluate_synonyms(model, online, cfg, gs, meta["train_goal_asts"],
                                   table, args.episodes, rng, syn_rng=_rng(args.seed + 1))
    if report.status != "ok":
        print(f"{args.suite}: - ({report.status})")
        return 0
    print(f"{args.suite} success rate: {report.rate:.3f} over {len(report.episodes)} episodes")
    for goal, (wins, total) in sorted(report.per_goal.items()):
        print(f"  {goal}: {wins}/{total}")
    if args.episodes_out:
        _write_episodes(args.episodes_out, report)
        print(f"episodes written to {args.episodes_out}")
    return 0


def cmd_render(args):
    cfg = EnvConfig(grid_size=args.grid_size, n_goals=args.n_goals,
                    n_lavas=args.n_lavas, mode=args.mode, seed=args.seed)
    env = new_env(cfg, _rng(cfg.seed))
    print(env.render_ascii())
    return 0


def cmd_analyze(args):
    if args.what == "correlations":
        cfg, gs, model, online, _, _ = load_run_checkpoint(args.checkpoint)
        goals = list(gs.all_goals)
        if model.encoder.kind == "one_hot":
            known = set(model.encoder.registry)
            goals = [g for g in goals if render_instruction(g) in known]
        mat, _, labels = export_correlations(model, online, goals, args.out)
        print(f"{len(labels)} goals; matrix and labels written to {args.out}")
    else:
        results = read_episode_jsonl(args.episodes)
        curve = write_csr_csv(results, args.out)
        print(f"CSR curve over {len(results)} episodes written to {args.out} "
              f"(final rate {curve[-1][1]:.3f})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="advicegrid")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", default=None, help="override the config output_dir")
    p.add_argument("--single-thread", action="store_true",
                   help="accepted for compatibility; execution is always single-threaded")
    p.add_argument("--verbose", dest="quiet", action="store_false")
    p.set_defaults(func=cmd_train, quiet=True)

    p = sub.add_parser("resume", help="continue training from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--verbose", dest="quiet", action="store_false")
    p.set_defaults(func=cmd_resume, quiet=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--suite", choices=("mt", "zsl", "synonym"), default="mt")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synonyms", default=None, help="synonym table file (synonym suite)")
    p.add_argument("--episodes-out", default=None, help="write per-episode JSONL here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="print an ASCII grid layout")
    p.add_argument("--grid-size", type=int, default=9)
    p.add_argument("--n-goals", type=int, default=3)
    p.add_argument("--n-lavas", type=int, default=3)
    p.add_argument("--mode", choices=("singleton", "compositional"), default="singleton")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("analyze", help="post-hoc diagnostics")
    asub = p.add_subparsers(dest="what", required=True)
    pc = asub.add_parser("correlations", help="embedding correlation matrices")
    pc.add_argument("--checkpoint", required=True)
    pc.add_argument("--out", required=True, help="output directory")
    pc.set_defaults(func=cmd_analyze)
    pr = asub.add_parser("csr", help="cumulative success rate curve")
    pr.add_argument("--episodes", required=True, help="JSONL of {success, length}")
    pr.add_argument("--out", required=True, help="output CSV path")
    pr.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
