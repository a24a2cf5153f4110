"""Command line driver: ``liprobust <subcommand>`` or ``python -m liprobust``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .data import load_idx, load_mnist
from .errors import ConfigError, FormatError, InvalidInputError
from .experiments import SweepConfig, rmt_check, run_init_sweep, run_train_sweep
from .lipschitz import all_estimates, empirical_lipschitz, spectral_product_bound
from .network import NetworkSpec, load_network, save_network, xavier_init
from .robustness import PerturbationSpec, robustness_report
from .rng import Rng
from .training import TrainConfig, metrics_to_csv, train

log = logging.getLogger("liprobust")


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sweep_config(args) -> SweepConfig:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    config = SweepConfig.from_dict(raw)
    for key in ("seed", "out", "workers", "mnist_dir"):
        value = getattr(args, key)
        if value is not None:
            setattr(config, key, value)
    if args.full_dataset:
        config.full_dataset = True
    return config


def cmd_estimate(args) -> int:
    rng = Rng(args.seed or 0)
    if args.weights:
        net = load_network(args.weights)
    else:
        spec = NetworkSpec(args.depth, args.input_dim, args.hidden_dim, args.output_dim, args.activation, args.alpha)
        net = xavier_init(spec, rng)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "value", "detail"])
    for est in all_estimates(net, samples=args.samples, rng=rng):
        detail = {k: v for k, v in est.detail.items() if k != "layer_norms"}
        writer.writerow([est.method, format(est.value, ".10g"), json.dumps(detail, sort_keys=True)])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_sweep_init(args) -> int:
    config = _sweep_config(args)
    text = run_init_sweep(config)
    if not config.out:
        sys.stdout.write(text)
    return 0


def cmd_sweep_train(args) -> int:
    config = _sweep_config(args)
    text = run_train_sweep(config)
    if not config.out:
        sys.stdout.write(text)
    return 0


def cmd_rmt_check(args) -> int:
    sizes = [tuple(int(v) for v in s.split("x")) for s in args.sizes]
    text = rmt_check(sizes, args.trials, args.seed or 0)
    _emit(text, args.out)
    return 0


def _dataset_from_args(args, split):
    if args.images and args.labels:
        return load_idx(args.images, args.labels)
    if not args.mnist_dir:
        raise ConfigError("give --mnist-dir or both --images and --labels")
    return load_mnist(args.mnist_dir, split, args.full_dataset)


def cmd_certify(args) -> int:
    net = load_network(args.weights)
    data = _dataset_from_args(args, "test")
    if args.limit:
        data = data.head(args.limit)
    pert = PerturbationSpec.parse(args.p, args.epsilon)
    rng = Rng(args.seed or 0)
    if args.lipschitz == "spectral_product":
        est = spectral_product_bound(net, rng=rng)
    else:
        est = empirical_lipschitz(net, 100, data, rng=rng)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "label", "margin", "radius_l2", "radius_linf", "ibp_certified", "lipschitz_method", "lipschitz"])
    for i, (x, label) in enumerate(zip(data.inputs, data.labels)):
        rep = robustness_report(net, x, int(label), est, pert, args.l2_mode)
        writer.writerow([i, int(label), format(rep.margin, ".10g"), format(rep.radius_l2, ".10g"),
                         format(rep.radius_linf, ".10g"), int(rep.ibp_certified), est.method, format(est.value, ".10g")])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_train(args) -> int:
    train_set = _dataset_from_args(args, "train")
    test_set = load_mnist(args.mnist_dir, "test", args.full_dataset) if args.mnist_dir else train_set
    spec = NetworkSpec(args.depth, train_set.input_dim, args.hidden_dim, args.output_dim, args.activation, args.alpha)
    config = TrainConfig(args.lr, args.epochs, args.batch_size, args.weight_decay, args.seed or 0,
                         PerturbationSpec.parse(args.p, args.epsilon))
    net, metrics = train(spec, train_set, config, test_set)
    _emit(metrics_to_csv(metrics), args.out)
    if args.save:
        save_network(net, args.save, text=args.text)
    return 0


def _common(p, config=False):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    if config:
        p.add_argument("--config", default=None, help="JSON sweep configuration")
        p.add_argument("--workers", type=int, default=None)
    p.add_argument("--mnist-dir", dest="mnist_dir", default=None)
    p.add_argument("--full-dataset", dest="full_dataset", action="store_true")


def _arch(p, input_dim=True):
    p.add_argument("--depth", type=int, default=2)
    if input_dim:
        p.add_argument("--input-dim", dest="input_dim", type=int, default=784)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=128)
    p.add_argument("--output-dim", dest="output_dim", type=int, default=10)
    p.add_argument("--activation", default="relu", choices=["relu", "sigmoid", "tanh", "identity"])
    p.add_argument("--alpha", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liprobust", description="Lipschitz estimation and certified robustness for MLPs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="all Lipschitz estimators for one architecture or weight file")
    _common(p)
    _arch(p)
    p.add_argument("--weights", default=None)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep-init", help="analytical vs numerical estimates at initialisation")
    _common(p, config=True)
    p.set_defaults(func=cmd_sweep_init)

    p = sub.add_parser("sweep-train", help="train a grid of architectures and report robustness")
    _common(p, config=True)
    p.set_defaults(func=cmd_sweep_train)

    p = sub.add_parser("rmt-check", help="largest singular value of Gaussian matrices vs the asymptotic law")
    _common(p)
    p.add_argument("--sizes", nargs="+", default=["1000x1000", "1600x400"], help="NxN entries like 1600x400")
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_rmt_check)

    p = sub.add_parser("certify", help="per-sample margins, radii and IBP verdicts")
    _common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--p", default="2")
    p.add_argument("--l2-mode", dest="l2_mode", default="dual", choices=["dual", "box"])
    p.add_argument("--lipschitz", default="spectral_product", choices=["spectral_product", "empirical"])
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("train", help="single training run with per-epoch metrics")
    _common(p)
    _arch(p, input_dim=False)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--p", default="2")
    p.add_argument("--save", default=None, help="write the trained weights here")
    p.add_argument("--text", action="store_true", help="save weights in the text format")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, InvalidInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
