"""Two-model evaluation protocol, iFEE, filtered APS averages and sweeps.

The dataset is split in half. One half trains the models used to optimize
policies; the other half trains a deliberately biased validation model and
supplies the instances being optimized. Each validation instance is optimized
with the optimization-side models and the improvement is scored with the
validation-side models: the individual future estimated effect is the
validation classifier's output at the original treatments minus its output at
the optimized treatments, so positive values mean the policy lowered the
predicted probability of the undesirable class.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, split_half
from .gp import KernelConfig, fit_gp, make_aps_result, treatment_profile
from .nets import (DEFAULT_ARCH_GRID, DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_LR,
                   predict_proba, train_classifier, train_indirect)
from .optimize import OptimizationConfig, OptimizationError, Variant, optimize

ADJUST_THRESHOLD = 1e-3
DEFAULT_KERNEL = KernelConfig(lengthscale=2.0, signal_variance=1.0,
                              noise_variance=0.05)


@dataclass(frozen=True)
class TrainSettings:
    """Training hyperparameters shared by both protocol sides."""

    folds: int = 5
    arch_grid: tuple = DEFAULT_ARCH_GRID
    epochs: int = DEFAULT_EPOCHS
    lr: float = DEFAULT_LR
    batch: int = DEFAULT_BATCH
    gp_restarts: int = 5


@dataclass(frozen=True)
class SideModels:
    """Everything one side of the protocol fits: f, f', H and the GPs."""

    f_weighted: object
    f_plain: object
    H: object
    gps: tuple


@dataclass(frozen=True)
class CellStats:
    """Aggregates for one (variant, budget, lambda) sweep cell."""

    variant: str
    budget: float
    lam: float
    ifee_mean: float
    aps_mean: float
    kept: int
    n_instances: int
    n_failed: int
    failed_rows: tuple
    freq_counts: tuple


@dataclass(frozen=True)
class ExperimentReport:
    cells: tuple
    treatment_names: tuple
    seed: int
    budgets: tuple
    lambdas: tuple
    variants: tuple
    n_opt: int
    n_val: int
    config: dict = field(default_factory=dict)


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def fit_side_models(half: Dataset, seed: int,
                    settings: TrainSettings = TrainSettings()) -> SideModels:
    """Fit GPs, both classifiers and the indirect estimator on one half."""
    Xc = half.controls()
    Xt = half.treatments()
    gps = tuple(
        fit_gp(Xc, Xt[:, j], DEFAULT_KERNEL, optimize_hypers=True,
               seed=_derive_seed(seed, 11, j), restarts=settings.gp_restarts)
        for j in range(half.schema.n_treatments))
    H = train_indirect(half, seed=_derive_seed(seed, 13),
                       epochs=settings.epochs, lr=settings.lr,
                       batch=settings.batch)
    f_w = train_classifier(half, weighted=True, gps=gps, folds=settings.folds,
                           arch_grid=settings.arch_grid,
                           seed=_derive_seed(seed, 17),
                           epochs=settings.epochs, lr=settings.lr,
                           batch=settings.batch)
    f_p = train_classifier(half, weighted=False, folds=settings.folds,
                           arch_grid=settings.arch_grid,
                           seed=_derive_seed(seed, 19),
                           epochs=settings.epochs, lr=settings.lr,
                           batch=settings.batch)
    return SideModels(f_weighted=f_w, f_plain=f_p, H=H, gps=gps)


def ifee(f_val, H_val, gps_val, schema, x_bar, x_star, weighted: bool,
         profile=None) -> float:
    """Validation-model improvement: output at x_bar minus output at x_star."""
    x_bar = np.asarray(x_bar, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    x_C = x_bar[list(schema.control_idx)]
    x_bar_T = x_bar[list(schema.treatment_idx)]
    if weighted:
        means, stds = treatment_profile(gps_val, x_C) if profile is None else profile
        before = predict_proba(f_val, H_val, x_C, x_bar_T,
                               make_aps_result(x_bar_T, means, stds))
        after = predict_proba(f_val, H_val, x_C, x_star,
                              make_aps_result(x_star, means, stds))
    else:
        before = predict_proba(f_val, H_val, x_C, x_bar_T, None)
        after = predict_proba(f_val, H_val, x_C, x_star, None)
    return before - after


def _filter_3sigma(values) -> tuple:
    """Mean of the values within three standard deviations of their mean."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("no values to average")
    mu, sd = float(np.mean(vals)), float(np.std(vals))
    keep = np.abs(vals - mu) <= 3.0 * sd
    return float(np.mean(vals[keep])), int(np.count_nonzero(keep))


def _policy_aps(density, x_star, x_bar_T, threshold):
    """Instance-level APS: mean density over the treatments the policy
    actually adjusts; over all treatments when nothing was adjusted."""
    adjusted = np.abs(x_star - x_bar_T) > threshold
    return float(np.mean(density[adjusted])) if adjusted.any() else float(np.mean(density))


def average_aps(policies, threshold: float = ADJUST_THRESHOLD) -> tuple:
    """3-sigma-filtered mean of the per-instance policy APS.

    Each instance contributes the mean propensity density over the treatments
    its policy adjusts (its whole treatment vector if the policy is empty);
    instance means farther than three standard deviations from their overall
    mean are discarded.
    """
    if not policies:
        raise ValueError("no policies to average")
    inst_means = [_policy_aps(p.aps_star.density, p.x_T_star, p.iterates[0],
                              threshold) for p in policies]
    return _filter_3sigma(inst_means)


def treatment_frequency(policies, x_bars, threshold: float = ADJUST_THRESHOLD):
    """Count, per treatment, the instances recommended to adjust it."""
    if len(policies) != len(x_bars):
        raise ValueError("policies and x_bars lengths differ")
    counts = None
    for p, xb in zip(policies, x_bars):
        xb = np.asarray(xb, dtype=np.float64)
        if p.x_T_star.shape != xb.shape:
            raise ValueError("treatment vector length mismatch")
        hit = (np.abs(p.x_T_star - xb) > threshold).astype(np.int64)
        counts = hit if counts is None else counts + hit
    return counts


def _cell_grid(variants, budgets, lambdas):
    """Sweep cells in deterministic order; lambda only varies for variant g."""
    cells = []
    for v in variants:
        v = Variant(v)
        lams = tuple(lambdas) if v is Variant.G else (0.0,)
        for b in budgets:
            for lam in lams:
                cells.append((v, float(b), float(lam)))
    return cells


def _optimize_block(ctx, rows):
    """Optimize a block of validation rows over every sweep cell."""
    (val, opt_models, val_models, cells, step, max_iters, tol, threshold) = ctx
    schema = val.schema
    c_idx = list(schema.control_idx)
    t_idx = list(schema.treatment_idx)
    out = []
    for i in rows:
        x_bar = val.X[i]
        x_C = x_bar[c_idx]
        x_bar_T = x_bar[t_idx]
        opt_profile = treatment_profile(opt_models.gps, x_C)
        val_profile = treatment_profile(val_models.gps, x_C)
        per_cell = []
        for (variant, budget, lam) in cells:
            cfg = OptimizationConfig(budget=budget, step=step,
                                     max_iters=max_iters, tol=tol, lam=lam,
                                     variant=variant)
            f_opt = opt_models.f_plain if variant is Variant.NON_CAUSAL_F else opt_models.f_weighted
            f_val = val_models.f_plain if variant is Variant.NON_CAUSAL_F else val_models.f_weighted
            try:
                policy = optimize(x_bar, f_opt, opt_models.H, opt_models.gps,
                                  schema, cfg, profile=opt_profile)
            except OptimizationError:
                per_cell.append(None)
                continue
            eff = ifee(f_val, val_models.H, val_models.gps, schema, x_bar,
                       policy.x_T_star, weighted=variant.needs_weighted,
                       profile=val_profile)
            inst_aps = _policy_aps(policy.aps_star.density, policy.x_T_star,
                                   x_bar_T, threshold)
            adjusted = np.abs(policy.x_T_star - x_bar_T) > threshold
            per_cell.append((eff, inst_aps, adjusted))
        out.append(per_cell)
    return out


def run_experiment(ds: Dataset, budgets, lambdas, variants, seed: int,
                   settings: TrainSettings = TrainSettings(),
                   step: float = 0.05, max_iters: int = 300, tol: float = 1e-7,
                   threshold: float = ADJUST_THRESHOLD,
                   jobs: int = 1) -> ExperimentReport:
    """Full protocol: half split, two model sides, per-instance optimization.

    Every validation-half instance is optimized with the optimization-side
    models for every sweep cell, scored with the validation-side models, and
    aggregated into per-cell average iFEE, filtered average APS and
    treatment-adjustment counts. Failed optimizations are excluded from the
    averages and reported per cell, never silently dropped.
    """
    if ds.norm_params is None:
        raise ValueError("dataset must be normalized first")
    if not budgets:
        raise ValueError("empty budget sweep")
    if ds.schema.n_treatments < 1:
        raise ValueError("need at least one treatment")
    variants = tuple(Variant(v) for v in variants)
    lambdas = tuple(float(x) for x in lambdas) or (0.0,)

    opt_half, val_half = split_half(ds, seed)
    opt_models = fit_side_models(opt_half, _derive_seed(seed, 1), settings)
    val_models = fit_side_models(val_half, _derive_seed(seed, 2), settings)

    cells = _cell_grid(variants, budgets, lambdas)
    ctx = (val_half, opt_models, val_models, cells, step, max_iters, tol,
           threshold)
    rows = list(range(val_half.n))
    if jobs > 1:
        blocks = [rows[k::jobs] for k in range(jobs)]
        blocks = [b for b in blocks if b]
        with ProcessPoolExecutor(max_workers=len(blocks)) as ex:
            results = list(ex.map(_optimize_block, [ctx] * len(blocks), blocks))
        per_row = [None] * len(rows)
        for block, res in zip(blocks, results):
            for i, r in zip(block, res):
                per_row[i] = r
    else:
        per_row = _optimize_block(ctx, rows)

    n_t = ds.schema.n_treatments
    cell_stats = []
    for ci, (variant, budget, lam) in enumerate(cells):
        effs, apses = [], []
        freq = np.zeros(n_t, dtype=np.int64)
        failed = []
        for i, per_cell in enumerate(per_row):
            rec = per_cell[ci]
            if rec is None:
                failed.append(i)
                continue
            eff, inst_aps, adjusted = rec
            effs.append(eff)
            apses.append(inst_aps)
            freq += adjusted
        aps_mean, kept = _filter_3sigma(apses)
        cell_stats.append(CellStats(
            variant=variant.value, budget=budget, lam=lam,
            ifee_mean=float(np.mean(effs)), aps_mean=aps_mean, kept=kept,
            n_instances=len(effs), n_failed=len(failed),
            failed_rows=tuple(failed), freq_counts=tuple(int(c) for c in freq)))

    return ExperimentReport(
        cells=tuple(cell_stats),
        treatment_names=ds.schema.treatment_names(),
        seed=seed,
        budgets=tuple(float(b) for b in budgets),
        lambdas=lambdas,
        variants=tuple(v.value for v in variants),
        n_opt=opt_half.n,
        n_val=val_half.n,
        config={"step": step, "max_iters": max_iters, "tol": tol,
                "threshold": threshold, "folds": settings.folds,
                "epochs": settings.epochs, "lr": settings.lr,
                "batch": settings.batch,
                "arch_grid": [list(a) for a in settings.arch_grid],
                "gp_restarts": settings.gp_restarts},
    )


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "seed": report.seed,
        "budgets": list(report.budgets),
        "lambdas": list(report.lambdas),
        "variants": list(report.variants),
        "treatment_names": list(report.treatment_names),
        "n_opt": report.n_opt,
        "n_val": report.n_val,
        "config": report.config,
        "cells": [{
            "variant": c.variant, "budget": c.budget, "lambda": c.lam,
            "ifee_mean": c.ifee_mean, "aps_mean": c.aps_mean, "kept": c.kept,
            "n_instances": c.n_instances, "n_failed": c.n_failed,
            "failed_rows": list(c.failed_rows),
            "freq_counts": list(c.freq_counts),
        } for c in report.cells],
    }


def write_report(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=1)


def write_sweep_csv(report: ExperimentReport, path) -> None:
    """Tidy sweep curves: one row per (cell, metric)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "budget", "lambda", "metric", "value"])
        for c in report.cells:
            writer.writerow([c.variant, repr(c.budget), repr(c.lam),
                             "ifee", repr(c.ifee_mean)])
            writer.writerow([c.variant, repr(c.budget), repr(c.lam),
                             "aps", repr(c.aps_mean)])
