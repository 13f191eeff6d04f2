"""Command-line entry points.

    gedi train  --preset moons_gedi --out runs/moons
    gedi ablate --dataset moons --seeds 5 --out runs/ablate
    gedi nesy   --preset digits_addition --out runs/nesy
    gedi eval   --checkpoint runs/moons/checkpoint.npz --preset moons_gedi
    gedi plot   --run runs/moons

Exit codes: 0 success, 1 configuration or usage error, 2 training aborted.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .config import ConfigError, apply_overrides, default_config, load_preset, parse_config, preset_names, resolved_text
from .evaluate import addition_accuracy, evaluate_clustering, write_summary
from .nn import ModelParams, Mlp
from .sampler import SgldDivergence
from .train import TrainingAbort, load_checkpoint, run_training, setup_task
from .plots import plot_run

# Ablation grid: which loss weights stay active in each variant. Zeroed terms
# fall back to the base config's values when active.
ABLATION_VARIANTS = (
    ("jem", ("w_gen",)),
    ("gedi_no_inv", ("w_gen", "w_prior")),
    ("gedi_no_prior", ("w_gen", "w_inv")),
    ("gedi_no_gen", ("w_inv", "w_prior")),
    ("gedi", ("w_gen", "w_inv", "w_prior")),
)

# The JEM baseline keeps its customary sampler recipe (10 SGLD steps per
# iteration, chains seeded from the uniform box); other variants inherit the
# base config's sampler untouched.
VARIANT_OVERRIDES = {
    "jem": {"sgld": {"steps": 10, "init": "uniform_box"}},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--config", help="path to an INI run config")
    p.add_argument("--preset", help=f"bundled preset name, one of {preset_names()}")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", help="override train.out_dir")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, key=value or section.key=value (repeatable)")


def _load_config(args, default_preset=None):
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        cfg = parse_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    elif default_preset:
        cfg = load_preset(default_preset)
    else:
        cfg = default_config()
    apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    if args.out:
        cfg["train"]["out_dir"] = args.out
    return cfg


def cmd_train(args):
    cfg = _load_config(args)
    out_dir = cfg["train"]["out_dir"] or None
    print("== gedi train ==")
    print(resolved_text(cfg))
    result = run_training(cfg, out_dir=out_dir, log=print)
    print(f"final nmi: {result.summary.nmi}")
    if out_dir:
        print(f"artifacts in {out_dir}")
    return 0


def _run_variant(cfg, name, active, seed, out_dir):
    run_cfg = {sec: dict(vals) for sec, vals in cfg.items()}
    for w in ("w_gen", "w_inv", "w_prior"):
        if w not in active:
            run_cfg["loss"][w] = 0.0
    run_cfg["loss"]["w_nesy"] = 0.0
    for sec, vals in VARIANT_OVERRIDES.get(name, {}).items():
        run_cfg[sec].update(vals)
    run_cfg["train"]["seed"] = seed
    run_dir = os.path.join(out_dir, f"{name}_seed{seed}") if out_dir else None
    run_cfg["train"]["out_dir"] = run_dir or ""
    result = run_training(run_cfg, out_dir=run_dir)
    return result.summary


def cmd_ablate(args):
    cfg = _load_config(args, default_preset=f"{args.dataset}_gedi")
    cfg["data"]["dataset"] = args.dataset
    out_dir = cfg["train"]["out_dir"] or None
    seeds = list(range(args.seeds))
    rows = []
    print(f"== gedi ablate: {args.dataset}, seeds {seeds} ==")
    for name, active in ABLATION_VARIANTS:
        for seed in seeds:
            summary = _run_variant(cfg, name, active, seed, out_dir)
            rows.append({
                "variant": name, "seed": seed, "nmi": summary.nmi,
                "cluster_collapse": summary.cluster_collapse,
                "cluster_collapse_stat": summary.cluster_collapse_stat,
                "repr_collapse": summary.repr_collapse,
                "repr_collapse_stat": summary.repr_collapse_stat,
            })
            print(f"  {name:14s} seed {seed}: nmi={summary.nmi:.4f} "
                  f"max_marginal={summary.cluster_collapse_stat:.4f}")
    print(f"{'variant':14s} {'nmi mean':>9s} {'nmi std':>8s}")
    for name, _ in ABLATION_VARIANTS:
        vals = np.array([r["nmi"] for r in rows if r["variant"] == name])
        print(f"{name:14s} {vals.mean():9.4f} {vals.std():8.4f}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "ablate_summary.csv")
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        print(f"summary written to {path}")
    return 0


def cmd_nesy(args):
    cfg = _load_config(args, default_preset="digits_addition")
    if args.n_examples:
        cfg["data"]["n_examples"] = args.n_examples
    cfg["data"]["task"] = "addition"
    out_dir = cfg["train"]["out_dir"] or None
    rows = []
    print(f"== gedi nesy: n_examples={cfg['data']['n_examples']} ==")
    for tag in ("with_constraint", "without_constraint"):
        run_cfg = {sec: dict(vals) for sec, vals in cfg.items()}
        if tag == "without_constraint":
            run_cfg["loss"].update({"w_nesy": 0.0, "w_inv": 50.0,
                                    "prior_mode": "cross_entropy"})
        run_dir = os.path.join(out_dir, tag) if out_dir else None
        run_cfg["train"]["out_dir"] = run_dir or ""
        result = run_training(run_cfg, out_dir=run_dir, log=print)
        rows.append({"run": tag, "accuracy": result.summary.accuracy,
                     "nmi": result.summary.nmi})
        print(f"  {tag}: accuracy={result.summary.accuracy:.4f} nmi={result.summary.nmi:.4f}")
    print(f"{'run':20s} {'accuracy':>9s} {'nmi':>7s}")
    for r in rows:
        print(f"{r['run']:20s} {r['accuracy']:9.4f} {r['nmi']:7.4f}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "nesy_summary.csv")
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["run", "accuracy", "nmi"])
            w.writeheader()
            w.writerows(rows)
        print(f"summary written to {path}")
    return 0


def _params_from_checkpoint(path):
    ckpt = load_checkpoint(path)
    desc = ckpt["meta"]["descriptor"]
    rng = np.random.default_rng(0)
    params = ModelParams(Mlp(desc["encoder_dims"], desc["activation"], rng),
                         Mlp(desc["head_dims"], desc["head_activation"], rng),
                         desc["temperature"])
    for i, t in enumerate(params.parameters()):
        t.data = ckpt[f"p{i}"]
    return params


def cmd_eval(args):
    cfg = _load_config(args)
    params = _params_from_checkpoint(args.checkpoint)
    task = setup_task(cfg)
    report = evaluate_clustering(params, task.test_x, task.test_labels)
    if task.addition_test is not None:
        report.accuracy = addition_accuracy(params, task.addition_test)
    print("== gedi eval ==")
    for key, value in report.as_dict().items():
        print(f"{key}={value}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_summary(report, os.path.join(args.out, "summary.txt"))
    return 0


def cmd_plot(args):
    written = plot_run(args.run, args.out)
    if not written:
        raise ConfigError(f"no plottable CSVs found in {args.run}")
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = _Parser(prog="gedi", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run per a config or preset")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="loss-term ablation grid over seeds")
    _add_common(p)
    p.add_argument("--dataset", choices=("moons", "circles"), required=True)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("nesy", help="digit-addition runs with and without the constraint")
    _add_common(p)
    p.add_argument("--n-examples", type=int, help="number of training triplets")
    p.set_defaults(fn=cmd_nesy)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a config's test data")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("plot", help="render figures from a run directory's CSVs")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="output directory (defaults to the run directory)")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (TrainingAbort, SgldDivergence) as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
