"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible scenario,
4 training diverged.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import experiments as ex
from . import gan as gan_mod
from .exceptions import (ConfigError, FormatError, InfeasibleScenario, InvalidArgument, InvalidModel,
                         TrainingDiverged)
from .scenario import load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 2, 3, 4

logger = logging.getLogger("msgan")


def _load_model(path, sc):
    ens = gan_mod.GeneratorEnsemble.load(path)
    if ens.dof != sc.chain.dof:
        raise ConfigError(f"model {path} has {ens.dof} joints, scenario {sc.name} has {sc.chain.dof}")
    return ens


def _train_overrides(path, sc):
    """``[gan]`` and ``[model]`` tables of a TOML file layered over the scenario's."""
    if path is None:
        return sc.gan, sc.model
    try:
        doc = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read training config {path}: {exc}") from exc
    unknown = set(doc) - {"gan", "model"}
    if unknown:
        raise ConfigError(f"{path}: unknown tables {sorted(unknown)}")
    try:
        g = dataclasses.replace(sc.gan, **doc.get("gan", {}))
        model = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.get("model", {}).items()}
        m = dataclasses.replace(sc.model, **model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return g, m


def cmd_gen_data(args):
    sc = load_scenario(args.scenario)
    n = sc.dataset_size if args.n is None else args.n
    ds = gan_mod.generate_dataset(sc.chain, sc.constraints, sc.world, n, np.random.default_rng(args.seed), sc.lbfgs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ds.save(args.out)
    print(f"wrote {len(ds)} configurations to {args.out}; acceptance rate {100 * ds.acceptance_rate:.1f}%")


def cmd_train(args):
    sc = load_scenario(args.scenario)
    cfg, model = _train_overrides(args.config, sc)
    ds = gan_mod.Dataset.load(args.data)
    if ds.configs.shape[1] != sc.chain.dof:
        raise ConfigError(f"{args.data} has {ds.configs.shape[1]} joints, scenario has {sc.chain.dof}")
    ens, _, history = gan_mod.train(ds, sc.chain, sc.constraints, cfg, np.random.default_rng(args.seed),
                                    n_nets=model.n_nets, noise_dim=model.noise_dim, hidden=tuple(model.hidden),
                                    disc_hidden=tuple(model.disc_hidden), task_box=sc.task_box)
    out = Path(args.out)
    ens.save(out)
    ds.save(out / "dataset.csv")
    lines = ["epoch,g_loss,d_loss,c_ee,c_s,c_l"]
    lines += [",".join([str(r["epoch"])] + [repr(r[k]) for k in ("g_loss", "d_loss", "c_ee", "c_s", "c_l")])
              for r in history.to_rows()]
    (out / "history.csv").write_text("\n".join(lines) + "\n")
    final = f"; final c_ee {history.c_ee[-1]:.4g}" if len(history) else ""
    print(f"trained {ens.n_nets} nets for {cfg.epochs} epochs{final}; wrote {out}")


def _print_summary(report):
    for agg in report.aggregates():
        parts = [f"{agg['method']:>6}: success {agg['success_pct']:.1f}%"]
        for c in report.counters[:1]:
            parts.append(f"{c} {agg[c + '_mean']:.1f} +- {agg[c + '_std']:.1f}")
            parts.append(f"{c}* {agg[c + '_star_mean']:.1f} +- {agg[c + '_star_std']:.1f}")
        print(", ".join(parts))


def _eval(args, runner):
    sc = load_scenario(args.scenario)
    ens = _load_model(args.model, sc)
    report = runner(sc, ens, args.trials, args.seed)
    paths = report.write(args.out)
    _print_summary(report)
    print(f"wrote {paths['rows']}, {paths['summary']}, {paths['timing']}")


def cmd_eval_projection(args):
    _eval(args, ex.eval_projection)


def cmd_eval_ik(args):
    _eval(args, ex.eval_ik)


def cmd_bench_plan(args):
    sc = load_scenario(args.scenario)
    ens = _load_model(args.model, sc)
    report = ex.bench_plan(sc, ens, args.trials, args.seed)
    paths = report.write(args.out)
    _print_summary(report)
    print(f"wrote {paths['rows']}, {paths['summary']}, {paths['timing']}")


def cmd_plan(args):
    sc = load_scenario(args.scenario)
    ens = _load_model(args.model, sc) if args.model else None
    results = ex.plan_paths(sc, ens, args.trials, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(ex.paths_text(results, sc.chain.dof))
    for row, _ in results:
        status = f"{row['path_nodes']} nodes" if row["success"] else "failed"
        print(f"trial {row['trial']}: {status}, {row['projections']} projections")


def _coverage_models(directory):
    directory = Path(directory)
    if (directory / "manifest.json").exists():
        return [(directory.name, directory)]
    found = sorted(p.parent for p in directory.glob("*/manifest.json"))
    if not found:
        raise ConfigError(f"no model found in {directory}")
    return [(p.name, p) for p in found]


def cmd_coverage(args):
    sc = load_scenario(args.scenario)
    found = _coverage_models(args.model)
    models = [(label, _load_model(path, sc)) for label, path in found]
    data_path = next((p / "dataset.csv" for _, p in found if (p / "dataset.csv").exists()), None)
    if data_path is None:
        raise ConfigError(f"no dataset.csv next to the model(s) in {args.model}")
    ds = gan_mod.Dataset.load(data_path)
    eps = sc.coverage_epsilon
    rows, samples = ex.coverage_rows(ds, models, eps, sc.coverage_clusters)
    stem = args.out[:-4] if args.out.endswith((".svg", ".csv")) else args.out
    Path(stem).parent.mkdir(parents=True, exist_ok=True)
    Path(stem + ".csv").write_text(ex.coverage_csv(rows, eps))
    panels = [(f"{label} ({ens.n_nets} nets)", samples[label]) for label, ens in models]
    Path(stem + ".svg").write_text(ex.scatter_svg(ds.configs, panels, sc.chain.joint_lower, sc.chain.joint_upper))
    for r in rows:
        print(f"{r['model']:>16}: coverage {r['coverage']:.3f} at eps {eps}, {r['clusters']} clusters")
    print(f"wrote {stem}.csv, {stem}.svg")


def build_parser():
    p = argparse.ArgumentParser(prog="msgan", description="Learned configuration samplers for constrained planar arms.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", help="sample-and-project a training dataset")
    s.add_argument("--scenario", required=True)
    s.add_argument("--n", type=int, default=None, help="rows (default: scenario dataset_size)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train a generator ensemble")
    s.add_argument("--scenario", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", default=None, help="TOML with [gan] / [model] overrides")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval-projection", cmd_eval_projection, "random vs GAN initialized projection"),
                                 ("eval-ik", cmd_eval_ik, "random vs GAN initialized IK"),
                                 ("bench-plan", cmd_bench_plan, "uniform vs mixed GAN sampler planning"),
                                 ("plan", cmd_plan, "plan and write paths")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--scenario", required=True)
        s.add_argument("--model", required=name != "plan", default=None)
        s.add_argument("--trials", type=int, default=1 if name == "plan" else 100)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("coverage", help="dataset coverage of one or more trained models")
    s.add_argument("--scenario", required=True)
    s.add_argument("--model", required=True, help="model directory, or a directory of model directories")
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.svg and PREFIX.csv")
    s.set_defaults(func=cmd_coverage)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "trials", 1) is not None and getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InfeasibleScenario as exc:
        print(f"error: infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, FormatError, InvalidArgument, InvalidModel, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
