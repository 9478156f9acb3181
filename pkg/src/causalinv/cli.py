"""Command-line entry point: train, optimize and evaluate subcommands.

All randomness flows from a single seed (flag ``--seed``, falling back to the
PROPHIT_SEED environment variable, then 0) split deterministically per
component, so every command is byte-for-byte reproducible given identical
inputs. ``train`` fits the optimization-side models on the first half of the
seeded split and serializes them; ``optimize`` loads them and emits policy
records for validation-half instances; ``evaluate`` runs the full two-model
protocol and writes the sweep report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import DataError, SchemaError, load_dataset, normalize, split_half
from .experiment import (TrainSettings, _derive_seed, fit_side_models,
                         run_experiment, write_report, write_sweep_csv)
from .gp import gp_from_dict, gp_to_dict, make_aps_result, treatment_profile
from .nets import classifier_from_dict, classifier_to_dict, indirect_from_dict, indirect_to_dict
from .optimize import OptimizationConfig, Variant, optimize

MANIFEST_FORMAT = "causalinv-manifest-1"


def _split_list(values, cast):
    out = []
    for v in values or []:
        for tok in str(v).split(","):
            tok = tok.strip()
            if tok:
                out.append(cast(tok))
    return out


def _seed_from(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PROPHIT_SEED")
    return int(env) if env else 0


def _settings_from(args):
    kwargs = {}
    if args.folds is not None:
        kwargs["folds"] = args.folds
    if args.epochs is not None:
        kwargs["epochs"] = args.epochs
    if args.lr is not None:
        kwargs["lr"] = args.lr
    if args.batch is not None:
        kwargs["batch"] = args.batch
    if args.gp_restarts is not None:
        kwargs["gp_restarts"] = args.gp_restarts
    archs = _split_list(args.arch, str)
    if archs:
        kwargs["arch_grid"] = tuple(
            tuple(int(w) for w in a.split("x") if w) for a in archs)
    return TrainSettings(**kwargs)


def _load_normalized(args):
    return normalize(load_dataset(args.data, args.schema))


def _safe_name(name):
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def _dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def cmd_train(args) -> int:
    seed = _seed_from(args)
    settings = _settings_from(args)
    ds = _load_normalized(args)
    opt_half, val_half = split_half(ds, seed)
    side = fit_side_models(opt_half, _derive_seed(seed, 1), settings)

    models_dir = os.path.join(args.out, "models")
    os.makedirs(models_dir, exist_ok=True)
    _dump_json(classifier_to_dict(side.f_weighted),
               os.path.join(models_dir, "classifier_weighted.json"))
    _dump_json(classifier_to_dict(side.f_plain),
               os.path.join(models_dir, "classifier_plain.json"))
    _dump_json(indirect_to_dict(side.H), os.path.join(models_dir, "indirect.json"))
    for name, gp in zip(ds.schema.treatment_names(), side.gps):
        _dump_json(gp_to_dict(gp),
                   os.path.join(models_dir, f"gp_{_safe_name(name)}.json"))
    manifest = {
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "data": os.path.basename(args.data),
        "schema": os.path.basename(args.schema),
        "n": ds.n, "n_opt": opt_half.n, "n_val": val_half.n,
        "treatments": list(ds.schema.treatment_names()),
        "classifiers": {
            "weighted": {"arch": side.f_weighted.training_meta["arch"],
                         "cv_loss": side.f_weighted.training_meta["cv_loss"],
                         "cv_losses": side.f_weighted.training_meta["cv_losses"]},
            "plain": {"arch": side.f_plain.training_meta["arch"],
                      "cv_loss": side.f_plain.training_meta["cv_loss"],
                      "cv_losses": side.f_plain.training_meta["cv_losses"]},
        },
        "settings": {"folds": settings.folds, "epochs": settings.epochs,
                     "lr": settings.lr, "batch": settings.batch,
                     "gp_restarts": settings.gp_restarts,
                     "arch_grid": [list(a) for a in settings.arch_grid]},
    }
    _dump_json(manifest, os.path.join(args.out, "manifest.json"))
    print(f"trained models written to {models_dir}")
    print(f"selected architectures: weighted={manifest['classifiers']['weighted']['arch']} "
          f"plain={manifest['classifiers']['plain']['arch']}")
    return 0


def _load_artifacts(art_dir, treatments):
    models_dir = os.path.join(art_dir, "models")
    def _read(name):
        path = os.path.join(models_dir, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"artifacts not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    f_w = classifier_from_dict(_read("classifier_weighted.json"))
    f_p = classifier_from_dict(_read("classifier_plain.json"))
    H = indirect_from_dict(_read("indirect.json"))
    gps = tuple(gp_from_dict(_read(f"gp_{_safe_name(t)}.json")) for t in treatments)
    return f_w, f_p, H, gps


def cmd_optimize(args) -> int:
    budgets = _split_list(args.budget, float)
    if len(budgets) != 1:
        raise ValueError("optimize expects exactly one --budget")
    lams = _split_list(args.lam, float) or [0.0]
    variant = Variant(_split_list(args.variant, str)[0]) if args.variant else Variant.G

    ds = _load_normalized(args)
    art_dir = args.artifacts or args.out
    manifest_path = os.path.join(art_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"artifacts not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    seed = args.seed if args.seed is not None else manifest["seed"]
    _, val_half = split_half(ds, seed)
    f_w, f_p, H, gps = _load_artifacts(art_dir, manifest["treatments"])
    f = f_p if variant is Variant.NON_CAUSAL_F else f_w

    rows = _split_list(args.instances, int) or list(range(val_half.n))
    cfg = OptimizationConfig(budget=budgets[0], step=args.step,
                             max_iters=args.max_iters, lam=lams[0],
                             variant=variant)
    t_idx = list(ds.schema.treatment_idx)
    names = ds.schema.treatment_names()
    np_t = ds.norm_params[t_idx] if ds.norm_params is not None else None
    records = []
    for i in rows:
        x_bar = val_half.X[i]
        res = optimize(x_bar, f, H, gps, ds.schema, cfg)
        x0, x1 = x_bar[t_idx], res.x_T_star
        def _raw(v):
            lo, hi = np_t[:, 0], np_t[:, 1]
            return v * np.where(hi > lo, hi - lo, 0.0) + lo
        records.append({
            "row": i,
            "treatments": list(names),
            "original": x0.tolist(),
            "optimized": x1.tolist(),
            "delta": (x1 - x0).tolist(),
            "original_raw": _raw(x0).tolist(),
            "optimized_raw": _raw(x1).tolist(),
            "aps": res.aps_star.density.tolist(),
            "cost": res.cost_spent,
            "objective_initial": float(res.objective_trace[0]),
            "objective_final": float(res.objective_trace.min()),
            "iterations": res.iterations_used,
        })
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "policies.json")
    _dump_json(records, out_path)
    for rec in records[:args.print_limit]:
        print(f"row {rec['row']}: cost {rec['cost']:.3f} "
              f"objective {rec['objective_initial']:.4f} -> {rec['objective_final']:.4f}")
        for t, o, v, d, a in zip(names, rec["original"], rec["optimized"],
                                 rec["delta"], rec["aps"]):
            if abs(d) > 1e-9:
                print(f"  {t}: {o:.3f} -> {v:.3f} (delta {d:+.3f}, aps {a:.3f})")
    print(f"{len(records)} policy records written to {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    budgets = _split_list(args.budget, float)
    if not budgets:
        raise ValueError("empty sweep: at least one --budget is required")
    lams = _split_list(args.lam, float) or [0.0]
    variants = [Variant(v) for v in (_split_list(args.variant, str)
                                     or [v.value for v in Variant])]
    seed = _seed_from(args)
    ds = _load_normalized(args)
    report = run_experiment(ds, budgets=budgets, lambdas=lams,
                            variants=variants, seed=seed,
                            settings=_settings_from(args), step=args.step,
                            max_iters=args.max_iters, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    write_report(report, os.path.join(args.out, "report.json"))
    write_sweep_csv(report, os.path.join(args.out, "sweep.csv"))
    for c in report.cells:
        print(f"{c.variant:<13s} B={c.budget:5.2f} lam={c.lam:5.2f}  "
              f"iFEE={c.ifee_mean:+.4f}  APS={c.aps_mean:.4f} "
              f"(kept {c.kept}/{c.n_instances}, failed {c.n_failed})")
    print(f"report and sweep written to {args.out}")
    return 0


def _add_common(p, training=True):
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: $PROPHIT_SEED or 0)")
    if training:
        p.add_argument("--folds", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch", type=int, default=None)
        p.add_argument("--gp-restarts", dest="gp_restarts", type=int, default=None)
        p.add_argument("--arch", action="append", default=None,
                       help="architecture candidate, widths joined by 'x' "
                            "(e.g. 32x16); repeatable")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="causalinv",
        description="budget-constrained treatment policies from "
                    "propensity-corrected classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit and serialize the models")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_opt = sub.add_parser("optimize", help="optimize validation instances")
    _add_common(p_opt, training=False)
    p_opt.add_argument("--artifacts", default=None,
                       help="directory with manifest.json and models/ "
                            "(default: --out)")
    p_opt.add_argument("--budget", action="append", required=True)
    p_opt.add_argument("--lambda", dest="lam", action="append", default=None)
    p_opt.add_argument("--variant", action="append", default=None,
                       help="f | fprime-noopt | fprime-opt | g")
    p_opt.add_argument("--step", type=float, default=0.05,
                       help="gradient step; keep below sigma^2/lambda for "
                            "large lambda or the pull term oscillates")
    p_opt.add_argument("--max-iters", dest="max_iters", type=int, default=300)
    p_opt.add_argument("--instances", action="append", default=None,
                       help="validation-half row positions (comma separated)")
    p_opt.add_argument("--print-limit", dest="print_limit", type=int, default=5)
    p_opt.set_defaults(func=cmd_optimize)

    p_eval = sub.add_parser("evaluate", help="run the full experiment protocol")
    _add_common(p_eval)
    p_eval.add_argument("--budget", action="append", required=True)
    p_eval.add_argument("--lambda", dest="lam", action="append", default=None)
    p_eval.add_argument("--variant", action="append", default=None)
    p_eval.add_argument("--step", type=float, default=0.05)
    p_eval.add_argument("--max-iters", dest="max_iters", type=int, default=300)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected failure: nonzero, with diagnostics
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
