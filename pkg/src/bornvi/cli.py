"""Command-line entry point: ``bornvi <command> [options]``.

Exit status is 0 on success, 1 when a run fails or a check does not pass,
and 2 for invalid options.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .advkl import AdvConfig
from .bayesnet import load_network
from .evalbench import HMM_CONFIG, HMM_LAYERS, LUNG_CONFIG, LUNG_LAYERS, N_INSTANCES, run_hmm, run_lungcancer, run_sprinkler
from .ksd import KsdConfig

log = logging.getLogger("bornvi")


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _training_options(p, defaults, layers):
    p.add_argument("--layers", type=_nonnegative_int, default=layers)
    p.add_argument("--epochs", type=_nonnegative_int, default=defaults.epochs)
    p.add_argument("--lr-born", type=_positive_float, default=defaults.lr_born)
    p.add_argument("--lr-mlp", type=_positive_float, default=defaults.lr_mlp)
    p.add_argument("--shots", type=_positive_int, default=defaults.shots_born, help="samples per Born-machine expectation")
    p.add_argument("--samples-per-class", type=_positive_int, default=defaults.samples_per_class)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact-expectations", action="store_true", help="enumerate instead of sampling")
    p.add_argument("--init-scale", type=_positive_float, default=defaults.init_scale)
    p.add_argument("--record-timing", action="store_true", help="fill the wall_time_ms column")
    p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="bornvi", description="Variational inference with Born machines.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sprinkler", help="random sprinkler instances conditioned on wet grass")
    _training_options(sp, AdvConfig(), 2)
    sp.add_argument("--method", choices=("kl", "ksd"), default="kl")
    sp.add_argument("--network", default=None, help="JSON network used as the structure template")
    sp.add_argument("--instances", type=_positive_int, default=N_INSTANCES)
    sp.add_argument("--jobs", type=_positive_int, default=1)

    hp = sub.add_parser("hmm", help="amortized inference on two HMM observations")
    _training_options(hp, HMM_CONFIG, HMM_LAYERS)
    hp.add_argument("--method", choices=("kl",), default="kl")

    lp = sub.add_parser("lungcancer", help="lung-cancer network given X=false, D=false, I=true")
    _training_options(lp, LUNG_CONFIG, LUNG_LAYERS)
    lp.add_argument("--method", choices=("kl",), default="kl")
    lp.add_argument("--network", default=None, help="JSON network replacing the bundled one")

    for name, text in (("stein-check", "verify the Stein identity and the KSD zero"),
                       ("grad-check", "compare analytic gradients with finite differences")):
        cp = sub.add_parser(name, help=text)
        cp.add_argument("--seed", type=int, default=0)
    return parser


def _adv_config(args, base):
    return replace(
        base,
        epochs=args.epochs,
        lr_born=args.lr_born,
        lr_mlp=args.lr_mlp,
        shots_born=args.shots,
        samples_per_class=args.samples_per_class,
        seed=args.seed,
        use_exact_expectations=args.exact_expectations,
        init_scale=args.init_scale,
        record_timing=args.record_timing,
    )


def _report(result):
    print(f"median final TVD {result.median_tvd_final:.4f}")
    if result.baseline_tvd:
        print(f"factorized baseline median TVD {result.baseline_median_tvd:.4f}")


def _run(args):
    if args.command == "sprinkler":
        if args.method == "kl":
            cfg = _adv_config(args, AdvConfig())
        else:
            cfg = KsdConfig(
                epochs=args.epochs, lr_born=args.lr_born, shots_born=args.shots, seed=args.seed,
                use_exact_expectations=args.exact_expectations, init_scale=args.init_scale,
                record_timing=args.record_timing,
            )
        template = load_network(args.network) if args.network else None
        res = run_sprinkler(args.method, args.layers, cfg, n_instances=args.instances, jobs=args.jobs,
                            out=args.out, template=template)
        _report(res)
        return 0
    if args.command == "hmm":
        res = run_hmm(_adv_config(args, HMM_CONFIG), layers=args.layers, out=args.out)
        _report(res)
        for k, obs in enumerate(res.extras["observations"], start=1):
            print(f"x{k}: true mode {obs['true_mode']}, learned mode {obs['learned_mode']}, "
                  f"next-latent estimate {obs['next_latent_estimate']:.4f}")
        return 0
    if args.command == "lungcancer":
        net = load_network(args.network) if args.network else None
        res = run_lungcancer(_adv_config(args, LUNG_CONFIG), layers=args.layers, out=args.out, network=net)
        _report(res)
        print(f"top-4 overlap {res.extras['top4_overlap']}")
        return 0

    from . import checks

    results = checks.gradient_checks(args.seed) if args.command == "grad-check" else checks.stein_checks(args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "method", None) == "ksd" and args.shots < 2:
            parser.error("--shots must be at least 2 for the ksd method")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"bornvi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
