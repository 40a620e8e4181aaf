"""``coreppr`` command line: ppr, corerank, precompute, train, eval, synth.

Every subcommand accepts ``--config FILE`` holding flat ``key = value``
lines; keys are flag names (dashes or underscores). Flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets, diffusion, graph, neural, ppr, trainer
from .errors import CorePPRError

DEFAULT_ALPHA = 0.25
DEFAULT_EPSILON = 1e-4
DEFAULT_L = 32
DEFAULT_POWER_ITERS = 50

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _hidden(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _l_value(text: str):
    # config files may set the shared l_mode destination to "dynamic"
    return "dynamic" if text == "dynamic" else int(text)


def _add_common(p, need_graph=True):
    p.add_argument("--config", help="key=value file with default flag values")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    if need_graph:
        p.add_argument("--graph", required=True, help="edge list file")


def _add_ppr_flags(p, l_default=DEFAULT_L):
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="restart probability")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="push precision")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--topl", dest="l_mode", type=_l_value, default=l_default, metavar="L",
                       help="keep the L largest scores per row")
    group.add_argument("--dynamic-l", dest="l_mode", action="store_const", const="dynamic",
                       help="choose each row's neighbor count at the elbow of its scores")


def _add_data_flags(p):
    p.add_argument("--features", required=True, help="CPPRF1 binary or CSV feature file")
    p.add_argument("--labels", required=True, help="node<TAB>class file")
    p.add_argument("--splits", required=True, help="splits directory or sectioned file")
    p.add_argument("--mode", choices=["ot", "tt"], default="ot", help="inference variant")
    p.add_argument("--power-iters", type=int, default=DEFAULT_POWER_ITERS,
                   help="power iterations for OT inference")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="coreppr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ppr", help="dump push rows", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--source", type=int, nargs="+", required=True, help="source node ids")
    _add_ppr_flags(p, l_default=None)
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("corerank", help="dump core numbers and CoreRank", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("precompute", help="write a propagation row cache", formatter_class=fmt)
    _add_common(p)
    _add_ppr_flags(p)
    p.add_argument("--sources", help="file of source ids, one per line (default: all nodes)")
    p.add_argument("--out", required=True, help="row cache file")

    p = sub.add_parser("train", help="train a model and write report.json", formatter_class=fmt)
    _add_common(p)
    _add_data_flags(p)
    _add_ppr_flags(p)
    p.add_argument("--epochs", type=int, default=200, help="maximum training epochs")
    p.add_argument("--batch-size", type=int, default=512, help="training nodes per batch")
    p.add_argument("--lr", type=float, default=5e-3, help="Adam learning rate")
    p.add_argument("--hidden", type=_hidden, default="32", help="comma separated hidden widths")
    p.add_argument("--patience", type=int, default=20, help="early-stop patience in epochs")
    p.add_argument("--dropout", type=float, default=0.0, help="dropout rate on hidden layers")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--freeze-gamma", action="store_true", help="pin gamma at 0")
    p.add_argument("--pprgo", action="store_true", help="skip CoreRank entirely")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    _add_common(p)
    _add_data_flags(p)
    _add_ppr_flags(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--split", choices=["train", "val", "test"], default="test", help="split to score")

    p = sub.add_parser("synth", help="write a stochastic block model dataset", formatter_class=fmt)
    _add_common(p, need_graph=False)
    p.add_argument("--n", type=int, default=1000, help="node count")
    p.add_argument("--blocks", type=int, default=5, help="number of planted blocks (classes)")
    p.add_argument("--p-in", type=float, default=0.05, help="within-block edge probability")
    p.add_argument("--p-out", type=float, default=0.002, help="cross-block edge probability")
    p.add_argument("--noise", type=float, default=0.5, help="feature noise scale")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def read_config(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _config_defaults(sub: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in sub._actions}
    # topl / dynamic_l share one destination
    dynamic = values.pop("dynamic_l", "false").lower()
    if dynamic not in _TRUE | _FALSE:
        sub.error(f"config key 'dynamic_l' needs a boolean, got {dynamic!r}")
    if "topl" in values:
        if dynamic in _TRUE:
            sub.error("config sets both topl and dynamic_l")
        values["l_mode"] = values.pop("topl")
    elif dynamic in _TRUE:
        values["l_mode"] = "dynamic"
    out = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            sub.error(f"unknown config key {key!r}")
        if key == "l_mode":
            out[key] = "dynamic" if raw == "dynamic" else int(raw)
        elif isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in _TRUE | _FALSE:
                sub.error(f"config key {key!r} needs a boolean, got {raw!r}")
            out[key] = raw.lower() in _TRUE
        elif action.nargs in ("+", "*"):
            out[key] = [action.type(v) if action.type else v for v in raw.split()]
        else:
            out[key] = action.type(raw) if action.type else raw
    return out


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command is not None:
        sub = parser._subparsers._group_actions[0].choices[command]
        try:
            values = read_config(known.config)
        except (OSError, ValueError) as exc:
            sub.error(str(exc))
        defaults = _config_defaults(sub, values)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _diffusion_config(args) -> diffusion.DiffusionConfig:
    dynamic = args.l_mode == "dynamic"
    return diffusion.DiffusionConfig(
        ppr=ppr.PprParams(args.alpha, args.epsilon),
        l=DEFAULT_L if dynamic else int(args.l_mode),
        dynamic_l=dynamic,
        inference_mode=getattr(args, "mode", "ot"),
        power_iters=getattr(args, "power_iters", DEFAULT_POWER_ITERS),
    )


def _output(path):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def cmd_ppr(args):
    g = graph.load_edge_list(args.graph)
    params = ppr.PprParams(args.alpha, args.epsilon)
    rows = ppr.push_rows(g, args.source, params, threads=args.threads)
    if args.l_mode == "dynamic":
        rows = [ppr.elbow_truncate(r) for r in rows]
    elif args.l_mode is not None:
        rows = [ppr.top_l(r, int(args.l_mode)) for r in rows]
    out = _output(args.out)
    try:
        for r in rows:
            for node, score in zip(r.nodes.tolist(), r.scores.tolist()):
                out.write(f"{r.source}\t{node}\t{score:.17g}\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_corerank(args):
    g = graph.load_edge_list(args.graph)
    scores = graph.core_scores(g)
    out = _output(args.out)
    try:
        for i, (c, cr) in enumerate(zip(scores.core_number.tolist(), scores.corerank.tolist())):
            out.write(f"{i} {c} {cr}\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_precompute(args):
    g = graph.load_edge_list(args.graph)
    cores = graph.core_scores(g)
    if args.sources:
        sources = np.loadtxt(args.sources, dtype=np.int64, ndmin=1)
    else:
        sources = np.arange(g.n)
    trainer.precompute_rows(g, cores, _diffusion_config(args), sources,
                            cache_path=args.out, threads=args.threads)


def _load_inputs(args):
    g = graph.load_edge_list(args.graph)
    data = datasets.load_dataset(args.features, args.labels, args.splits)
    if data.n != g.n:
        raise CorePPRError(f"graph has {g.n} nodes but features have {data.n} rows")
    return g, graph.core_scores(g), data


def cmd_train(args):
    g, cores, data = _load_inputs(args)
    cfg = trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        hidden=tuple(args.hidden),
        diffusion=_diffusion_config(args),
        patience=args.patience,
        freeze_gamma=args.freeze_gamma,
        use_core=not args.pprgo,
        dropout=args.dropout,
        threads=args.threads,
    )
    model, report = trainer.train(g, cores, data, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    neural.save_model(model, out / "model.cppr")
    (out / "report.json").write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
    logging.getLogger(__name__).info("test accuracy %.2f%%, gamma %.4f", report.accuracy_test, report.gamma_final)


def cmd_eval(args):
    g, cores, data = _load_inputs(args)
    model = neural.load_model(args.checkpoint)
    cfg = _diffusion_config(args)
    acc, seconds = trainer.evaluate(model, g, cores, data, args.mode, cfg, split=args.split,
                                    threads=args.threads)
    print(json.dumps({"accuracy": acc, "split": args.split, "mode": args.mode,
                      "gamma": model.gamma, "time_infer_s": round(seconds, 3)}))


def cmd_synth(args):
    g, data = datasets.generate_sbm(args.n, args.blocks, args.p_in, args.p_out, args.noise, seed=args.seed)
    datasets.save_dataset(g, data, args.out)


COMMANDS = {
    "ppr": cmd_ppr,
    "corerank": cmd_corerank,
    "precompute": cmd_precompute,
    "train": cmd_train,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (CorePPRError, ValueError, OSError, IndexError) as exc:
        print(f"coreppr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
