"""Command line entry point: ``jobrl {gen,train,solve,ratio,bench,ood,sweep,diag}``.

Every subcommand accepts ``--seed``, ``--out`` and ``--config FILE``.  A config
file holds ``key = value`` lines whose keys are long option names (dashes or
underscores); values given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .baselines import exact_optimum
from .checkpoint import load_checkpoint, save_checkpoint
from .generators import PRESETS, GeneratorConfig, generate_many, load_dataset, write_dataset
from .graph import REMOVAL_MODES, BIDIRECTIONAL, read_graph
from .harness import (
    DEFAULT_BUDGET,
    Dataset,
    emit,
    format_table,
    run_benchmark,
    run_diagnostics,
    run_er_sweep,
    run_ood,
)
from .mis import BudgetExceeded
from .trainer import TrainConfig, TrainingDiverged, train

log = logging.getLogger("jobrl")


def read_config(path):
    """Parse a ``key = value`` file into a dict of strings (``#`` starts a comment)."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise SystemExit(f"not a boolean: {text!r}")


def _config_defaults(parser, values):
    """Convert config strings to the types the parser's actions expect."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config", "command"):
            raise SystemExit(f"config key {key!r} is not an option of this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = _parse_bool(raw)
        elif isinstance(action, argparse._AppendAction) or action.nargs in ("+", "*"):
            conv = action.type or str
            defaults[key] = [conv(x) for x in raw.replace(",", " ").split()]
        else:
            defaults[key] = (action.type or str)(raw)
    return defaults


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    p.add_argument("--out", default=None, help="output path (file or directory)")
    p.add_argument("--config", default=None, help="key = value file mirroring the long options")


def _named_paths(items, what):
    out = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = os.path.basename(os.path.normpath(item)), item
        if name in out:
            raise SystemExit(f"duplicate {what} label {name!r}")
        out[name] = path
    return out


def _datasets(items):
    return [Dataset.from_dir(name, path) for name, path in _named_paths(items, "dataset").items()]


def build_parser():
    parser = argparse.ArgumentParser(prog="jobrl", description="Job allocation with graph Q-learning.")
    parser.add_argument("--version", action="version", version=f"jobrl {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset directory")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--family", default=None, help="erdos-renyi|barabasi-albert (or er|ba)")
    p.add_argument("--n-jobs", "--jobs", type=int, default=None)
    p.add_argument("--n-people", "--people", type=int, default=None)
    p.add_argument("--p-conflict", type=float, default=None)
    p.add_argument("--p-select", type=float, default=None)
    p.add_argument("--ba-m", type=int, default=None)
    p.add_argument("--count", type=int, default=20)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a Q-network and write a checkpoint")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", default=None, help="dataset directory to sample episodes from")
    src.add_argument("--preset", choices=sorted(PRESETS), default=None,
                     help="generate the training set from a preset")
    p.add_argument("--count", type=int, default=200, help="instances generated with --preset")
    tc = TrainConfig()
    p.add_argument("--episodes", type=int, default=tc.episodes)
    p.add_argument("--batch-size", "--batch", type=int, default=tc.batch_size)
    p.add_argument("--learning-rate", "--lr", type=float, default=tc.learning_rate)
    p.add_argument("--gamma", type=float, default=tc.gamma)
    p.add_argument("--tau", type=float, default=tc.tau)
    p.add_argument("--exploration", "--explore", default=tc.exploration, help="softmax|eps-greedy")
    p.add_argument("--epsilon", type=float, default=tc.epsilon)
    p.add_argument("--temperature", type=float, default=tc.temperature)
    p.add_argument("--alpha", type=float, default=tc.alpha)
    p.add_argument("--beta", type=float, default=tc.beta)
    p.add_argument("--per-eps", type=float, default=tc.per_eps)
    p.add_argument("--buffer-size", type=int, default=tc.buffer_size)
    p.add_argument("--weight-decay", type=float, default=tc.weight_decay)
    p.add_argument("--removal-mode", choices=REMOVAL_MODES, default=tc.removal_mode)
    p.add_argument("--conflict-msg-dir", choices=("in", "out"), default=tc.conflict_msg_dir)
    p.add_argument("--dims", type=int, nargs="+", default=list(tc.dims))
    p.add_argument("--log", default=None, help="training CSV (default: <out>.train.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="exact maximum allocation of one instance")
    _common(p)
    p.add_argument("--exact", metavar="FILE")
    p.add_argument("--budget", type=int, default=10**7)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ratio", help="approximation ratio of one policy on a dataset")
    _common(p)
    p.add_argument("--policy", help="greedy[:total] | random[:SEED] | untrained-gnn[:SEED] | gnn:CKPT")
    p.add_argument("--instances", metavar="DIR")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--removal-mode", choices=REMOVAL_MODES, default=BIDIRECTIONAL)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("bench", help="ratio table over methods and datasets")
    _common(p)
    p.add_argument("--dataset", action="append", metavar="[NAME=]DIR")
    p.add_argument("--method", action="append", default=None, metavar="POLICY")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--removal-mode", choices=REMOVAL_MODES, default=BIDIRECTIONAL)
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ood", help="checkpoints x datasets table")
    _common(p)
    p.add_argument("--checkpoint", action="append", metavar="[LABEL=]PATH")
    p.add_argument("--dataset", action="append", metavar="[NAME=]DIR")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("sweep", help="vary one ER parameter and evaluate")
    _common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--parameter", choices=("p_conflict", "n_jobs"), default="p_conflict")
    p.add_argument("--grid", type=float, nargs="+", default=[0.05, 0.10, 0.15, 0.20, 0.25, 0.30])
    p.add_argument("--n-jobs", type=int, default=30)
    p.add_argument("--n-people", type=int, default=5)
    p.add_argument("--p-conflict", type=float, default=0.10)
    p.add_argument("--p-select", type=float, default=0.666)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diag", help="per-step max Q of one greedy-policy episode")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--instance", metavar="FILE")
    p.set_defaults(func=cmd_diag)
    return parser


# checked after the config file is merged, so these may come from either source
REQUIRED = {
    "solve": ("exact",),
    "ratio": ("policy", "instances"),
    "bench": ("dataset",),
    "ood": ("checkpoint", "dataset"),
    "diag": ("checkpoint", "instance"),
}


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**_config_defaults(subparser, read_config(args.config)))
        args = parser.parse_args(argv)
    missing = [f"--{name.replace('_', '-')}" for name in REQUIRED.get(args.command, ()) if not getattr(args, name)]
    if missing:
        parser.error(f"{args.command}: missing {', '.join(missing)}")
    return args


def _require_out(args, what):
    if not args.out:
        raise SystemExit(f"{args.command}: --out {what} is required")
    return args.out


def cmd_gen(args):
    out = _require_out(args, "DIR")
    base = PRESETS[args.preset] if args.preset else GeneratorConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("family", "n_jobs", "n_people", "p_conflict", "p_select", "ba_m")
        if getattr(args, k) is not None
    }
    cfg = GeneratorConfig(**{**base.__dict__, **overrides, "seed": args.seed})
    records = write_dataset(cfg, args.count, out)
    print(f"wrote {len(records)} instances to {out}")


def cmd_train(args):
    out = _require_out(args, "CHECKPOINT")
    if args.dataset:
        graphs, records = load_dataset(args.dataset)
        generator = {"source": "dataset", "records": records[:1], "count": len(graphs)}
    else:
        gen_cfg = PRESETS[args.preset or "er-desk"].with_seed(args.seed)
        graphs = generate_many(gen_cfg, args.count)
        generator = {"source": "preset", "preset": args.preset or "er-desk", "family": gen_cfg.family,
                     "params": gen_cfg.params(), "seed": gen_cfg.seed, "count": args.count}
    cfg = TrainConfig(
        learning_rate=args.learning_rate, batch_size=args.batch_size, episodes=args.episodes,
        gamma=args.gamma, tau=args.tau, epsilon=args.epsilon, exploration=args.exploration,
        temperature=args.temperature, alpha=args.alpha, beta=args.beta, per_eps=args.per_eps,
        buffer_size=args.buffer_size, weight_decay=args.weight_decay, removal_mode=args.removal_mode,
        dims=tuple(args.dims), conflict_msg_dir=args.conflict_msg_dir, seed=args.seed,
    )
    log_path = args.log or out + ".train.csv"

    def progress(ep, ret, loss):
        log.info("episode %d return %.0f loss %.4g", ep, ret, loss)

    try:
        params, tlog = train(graphs, cfg, progress=progress)
    except TrainingDiverged as exc:
        if exc.log is not None:
            exc.log.write_csv(log_path)
        print(f"training diverged: {exc}; partial log in {log_path}", file=sys.stderr)
        return 3
    save_checkpoint(out, params, {"generator": generator, "train_config": cfg.to_dict()})
    tlog.write_csv(log_path)
    print(f"checkpoint {out}, log {log_path}, {len(tlog.rows)} updates")


def cmd_solve(args):
    g = read_graph(args.exact)
    code = 0
    try:
        res = exact_optimum(g, args.budget)
    except BudgetExceeded as exc:
        res, code = exc.result, 2
    lines = [f"# size {res.size} optimal {str(res.optimal).lower()} nodes {res.node_count}", "person,job"]
    lines += [f"{a.person},{a.job}" for a in res.witness]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def cmd_ratio(args):
    ds = Dataset.from_dir(os.path.basename(os.path.normpath(args.instances)), args.instances)
    report = run_benchmark([ds], [args.policy], seeds=args.seeds, seed=args.seed,
                           budget=args.budget, mode=args.removal_mode)
    (_, _, n, n_skip, mean, std), = report.summary_rows()
    print(f"{args.policy}: {mean:.4f} ± {std:.4f} over {n} instances ({n_skip} skipped)")
    if args.out:
        emit(report, args.out)


def cmd_bench(args):
    methods = args.method or ["greedy", "random", "untrained-gnn"]
    report = run_benchmark(_datasets(args.dataset), methods, seeds=args.seeds, seed=args.seed,
                           budget=args.budget, mode=args.removal_mode)
    _finish_report(report, args)


def cmd_ood(args):
    report = run_ood(_named_paths(args.checkpoint, "checkpoint"), _datasets(args.dataset),
                     seed=args.seed, budget=args.budget)
    _finish_report(report, args)


def _finish_report(report, args):
    sys.stdout.write(format_table(report))
    if args.out:
        emit(report, args.out, args.format)
        if args.format == "table":
            emit(report, args.out, "csv")


def cmd_sweep(args):
    out = _require_out(args, "FILE")
    base = GeneratorConfig("erdos-renyi", n_jobs=args.n_jobs, n_people=args.n_people,
                           p_conflict=args.p_conflict, p_select=args.p_select)
    result = run_er_sweep(args.checkpoint, args.parameter, args.grid, base=base, count=args.count,
                          seed=args.seed, seeds=args.seeds, budget=args.budget)
    emit(result, out)
    with open(out + ".meta.json", "w") as fh:
        fh.write(json.dumps(result.metadata, sort_keys=True, indent=1) + "\n")
    print(f"wrote {out}")


def cmd_diag(args):
    out = _require_out(args, "FILE")
    params, _ = load_checkpoint(args.checkpoint)
    diag = run_diagnostics(params, read_graph(args.instance))
    emit(diag, out)
    print(f"wrote {len(diag.max_q)} steps to {out}")


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
