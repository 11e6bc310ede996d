"""Command-line entry point: ``ffnet <command> [flags]``.

Every command accepts ``--config FILE`` holding flat ``key = value`` lines
(``#`` starts a comment).  Keys are flag names with dashes replaced by
underscores; explicit flags override file values.  The fully resolved
configuration is echoed to stderr (and to ``<out>/config.txt`` when
``--out`` is given) in the same format, so it can be fed back verbatim.

Exit codes: 0 success, 1 failed check, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
import time

import numpy as np

from . import checkpoint, data, diagnostics, graph, trainer
from .errors import FFNetError
from .runtime import deterministic_mode

log = logging.getLogger("ffnet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PUBLISHED_SIZE_MB = 10.8
PUBLISHED_LATENCY_MS = 2.8


class UsageError(Exception):
    pass


def _shape(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        dims = ()
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected CxHxW, got {text!r}")
    return dims


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bit-exact execution")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_arch(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stages", type=int, default=graph.DEFAULT_STAGES)
    p.add_argument("--input", type=_shape, default=(3, 32, 32), help="CxHxW")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--branch-width", type=int, default=graph.DEFAULT_BRANCH_WIDTH)
    p.add_argument("--fc1", type=int, default=graph.DEFAULT_FC_SIZES[0])
    p.add_argument("--fc2", type=int, default=graph.DEFAULT_FC_SIZES[1])
    p.add_argument("--ablation", action="store_true", help="drop the fast-forward branches")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("synthetic", "cifar10", "records"), default="synthetic")
    p.add_argument("--data-dir", help="directory with CIFAR-10 binary batches")
    p.add_argument("--records", help="file of CIFAR-layout binary records")
    p.add_argument("--synthetic-kind", choices=("separable", "noise"), default="separable")
    p.add_argument("--n-samples", type=int, default=64, help="synthetic dataset size")
    p.add_argument("--subset", type=int, default=0, help="use only the first N training samples")
    p.add_argument("--normalize", action="store_true", help="per-channel standardization from the training split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network, write checkpoint and metrics CSV")
    _add_common(p), _add_arch(p), _add_data(p)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--eval-interval", type=int, default=100)
    p.add_argument("--lr-schedule", choices=("fixed", "step"), default="fixed")
    p.add_argument("--lr-gamma", type=float, default=0.1)
    p.add_argument("--lr-step", type=int, default=10000)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--val", type=int, default=0, help="hold out the last N training samples for validation")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p), _add_arch(p), _add_data(p)
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--ten-crop", action="store_true")

    p = sub.add_parser("inspect", help="shape, parameter and path-depth report")
    _add_common(p), _add_arch(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_common(p), _add_arch(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--max-per-tensor", type=int, default=20,
                   help="coordinates sampled per tensor; 0 checks every coordinate")

    p = sub.add_parser("flowprobe", help="FFNet vs ablation gradient-flow experiment")
    _add_common(p), _add_arch(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--min-fraction", type=float, default=0.9)

    p = sub.add_parser("bench", help="single-image forward latency")
    _add_common(p), _add_arch(p)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--passes", type=int, default=100)
    return parser


# -- config resolution --------------------------------------------------------

def read_config_file(path) -> list[tuple[str, str]]:
    items = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            items.append((key, value))
    return items


def _config_argv(sub: argparse.ArgumentParser, items) -> list[str]:
    flags = {a.dest: a for a in sub._actions if a.option_strings}
    argv = []
    for key, value in items:
        action = flags.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        flag = max(action.option_strings, key=len)
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv += [flag, value]
    return argv


def resolve_args(argv=None) -> argparse.Namespace:
    """Parse flags, merging defaults < config file < explicit flags.

    File entries are turned into flags and placed before the command-line
    flags, so argparse's last-one-wins rule gives the override order.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub = subparsers.choices[args.command]
        file_argv = _config_argv(sub, read_config_file(args.config))
        idx = argv.index(args.command)
        args = parser.parse_args(argv[:idx + 1] + file_argv + argv[idx + 1:])
    return args


def format_config(args: argparse.Namespace) -> str:
    lines = []
    for key, value in sorted(vars(args).items()):
        if key in ("command", "config") or value is None:
            continue
        if key == "input":
            value = "x".join(str(d) for d in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- helpers -----------------------------------------------------------------

def spec_from_args(args) -> graph.NetworkSpec:
    return graph.build_ffnet(args.input, args.classes, args.stages, args.ablation,
                             args.branch_width, (args.fc1, args.fc2))


def load_data(args) -> tuple[data.Dataset, data.Dataset | None]:
    if args.dataset == "synthetic":
        train = data.synthetic_dataset(args.synthetic_kind, args.n_samples, args.classes,
                                       args.seed, image_shape=args.input)
        test = None
    elif args.dataset == "cifar10":
        if not args.data_dir:
            raise UsageError("--dataset cifar10 needs --data-dir")
        train, test = data.load_cifar10(args.data_dir)
    else:
        if not args.records:
            raise UsageError("--dataset records needs --records")
        train, test = data.load_records(args.records, args.classes), None
    if args.subset:
        train = train.subset(slice(0, args.subset))
    if args.normalize:
        stats = data.channel_stats(train)
        train = data.normalize(train, stats)
        test = data.normalize(test, stats) if test is not None else None
    return train, test


def _out_path(args, name: str) -> str | None:
    if not args.out:
        return None
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# -- commands ----------------------------------------------------------------

def cmd_train(args) -> int:
    spec = spec_from_args(args)
    train_set, _ = load_data(args)
    val = None
    if args.val:
        train_set, val = data.split_validation(train_set, args.val)
    cfg = trainer.TrainConfig(args.batch_size, args.lr, args.momentum, args.weight_decay, args.iters,
                              args.eval_interval, args.seed, args.lr_schedule, args.lr_gamma,
                              args.lr_step, not args.no_augment)
    params, start = None, 0
    if args.resume:
        ck = checkpoint.load_checkpoint(args.resume, spec)
        if ck.seed != args.seed:
            raise UsageError(f"checkpoint seed {ck.seed} differs from --seed {args.seed}")
        params, start = ck.params, ck.iteration
    metrics_path = _out_path(args, "metrics.csv")
    result = trainer.train(spec, train_set, cfg, params, start, val, metrics_path)
    ck_path = _out_path(args, "checkpoint.ffnt")
    if ck_path:
        checkpoint.save_checkpoint(ck_path, spec, result.params, result.iteration, args.seed)
    sys.stdout.write(result.metrics_csv())
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = spec_from_args(args)
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint")
    params = checkpoint.load_checkpoint(args.checkpoint, spec).params
    train_set, test_set = load_data(args)
    split = test_set if args.split == "test" and test_set is not None else train_set
    loss, acc = trainer.evaluate(spec, params, split, ten_crop=args.ten_crop)
    print(f"loss {loss!r} accuracy {acc!r}")
    return EXIT_OK


def inspect_report(spec: graph.NetworkSpec) -> str:
    counts = graph.count_params(spec)
    per_layer = dict(counts.table)
    lines = [f"{'layer':<16} {'output':>16} {'params':>10}"]
    for name, shape in graph.infer_shapes(spec):
        lines.append(f"{name:<16} {'x'.join(map(str, shape)):>16} {per_layer.get(name, 0):>10}")
    convs = list(graph.conv_layers(spec))
    n_ff = sum(1 for _, c in convs if c.kernel == 5)
    shortest, longest = graph.gradient_path_depth(spec)
    lines += [
        "spatial trace " + "->".join(str(n) for n in spec.stage_extents()),
        f"conv layers {len(convs)} ({len(convs) - n_ff} deep + {n_ff} fast-forward)",
        f"gradient path depth shortest {shortest} longest {longest}",
        f"size {counts.size_mb:.2f} MB at 4 bytes/param (published figure {PUBLISHED_SIZE_MB} MB; "
        f"not reproducible from the stated architecture)",
        f"total params {counts.total}",
    ]
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    print(inspect_report(spec_from_args(args)))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    spec = spec_from_args(args)
    report = diagnostics.gradcheck(spec, args.seed, args.tol, args.batch_size,
                                   max_per_tensor=args.max_per_tensor or None)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_flowprobe(args) -> int:
    arch = {"branch_width": args.branch_width, "fc_sizes": (args.fc1, args.fc2)}
    summary = diagnostics.flow_experiment(args.stages, range(args.seed, args.seed + args.seeds),
                                          args.batch_size, args.input, args.classes, **arch)
    print(summary.format())
    path = _out_path(args, "flow.csv")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(summary.to_csv())
        for pf, pa in summary.profiles:
            for prof in (pf, pa):
                with open(_out_path(args, f"profile_{prof.tag}_{prof.seed}.csv"), "w",
                          encoding="utf-8", newline="") as f:
                    f.write(prof.to_csv())
    return EXIT_OK if summary.fraction >= args.min_fraction else EXIT_FAIL


def cmd_bench(args) -> int:
    spec = spec_from_args(args)
    params = graph.init_params(spec, args.seed)
    x = np.random.default_rng(args.seed).standard_normal((1, *spec.input_shape)).astype(np.float32)
    for _ in range(args.warmup):
        graph.forward(spec, params, x)
    times = []
    for _ in range(args.passes):
        t0 = time.perf_counter()
        graph.forward(spec, params, x)
        times.append((time.perf_counter() - t0) * 1e3)
    sd = statistics.stdev(times) if len(times) > 1 else 0.0
    print(f"forward latency per image: mean {statistics.fmean(times):.3f} ms, std {sd:.3f} ms "
          f"({args.warmup} warmup + {args.passes} passes, n=1)")
    print(f"published reference: {PUBLISHED_LATENCY_MS} ms on a K80 GPU (not comparable)")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect,
    "gradcheck": cmd_gradcheck, "flowprobe": cmd_flowprobe, "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = resolve_args(argv)
    except UsageError as exc:
        print(f"ffnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    resolved = format_config(args)
    sys.stderr.write(f"# {args.command}\n{resolved}")
    cfg_path = _out_path(args, "config.txt")
    if cfg_path:
        with open(cfg_path, "w", encoding="utf-8", newline="") as f:
            f.write(resolved)
    try:
        with deterministic_mode(args.deterministic):
            return COMMANDS[args.command](args)
    except (UsageError, FFNetError, FileNotFoundError) as exc:
        print(f"ffnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
