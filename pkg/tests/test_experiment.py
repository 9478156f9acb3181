import json

import numpy as np
import pytest

from causalinv.experiment import (TrainSettings, _cell_grid, average_aps,
                                  ifee, report_to_dict, run_experiment,
                                  treatment_frequency, write_sweep_csv)
from causalinv.gp import ApsResult, KernelConfig, fit_gp
from causalinv.nets import IndirectEstimator, MlpClassifier
from causalinv.optimize import PolicyResult, Variant
from tests.conftest import make_dataset, make_schema


def _policy(density, x_star, x_bar):
    x_star = np.asarray(x_star, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    k = len(x_star)
    res = ApsResult(mean=np.zeros(k), std=np.ones(k),
                    density=np.asarray(density, dtype=float),
                    density_grad=np.zeros(k))
    return PolicyResult(x_T_star=x_star, objective_trace=np.zeros(2),
                        aps_star=res, iterations_used=1, cost_spent=0.0,
                        iterates=np.vstack([x_bar, x_star]))


def _monotone_f(n_c, n_t, slope=2.5, weighted=False):
    p = n_c + n_t
    W = np.zeros((1, p))
    W[0, n_c:] = slope
    return MlpClassifier((p, 1), [W], [np.zeros(1)], weighted, n_c, 0, n_t)


def _gps(n_c, n_t, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((25, n_c))
    return tuple(
        fit_gp(X, 0.5 + 0.2 * X[:, 0] + rng.normal(0, 0.1, 25),
               KernelConfig(1.0, 0.3, 0.05), optimize_hypers=False)
        for _ in range(n_t))


class TestIfee:
    def setup_method(self):
        self.schema = make_schema(1, 0, 1)
        self.H = IndirectEstimator.passthrough(1, 1)
        self.gps = _gps(1, 1)

    def test_identical_vectors_give_zero(self):
        f = _monotone_f(1, 1)
        x_bar = np.array([0.4, 0.5])
        val = ifee(f, self.H, self.gps, self.schema, x_bar, np.array([0.5]),
                   weighted=False)
        assert val == 0.0

    def test_constant_model_gives_zero(self):
        f = _monotone_f(1, 1, slope=0.0)
        x_bar = np.array([0.4, 0.5])
        val = ifee(f, self.H, self.gps, self.schema, x_bar, np.array([0.1]),
                   weighted=False)
        assert val == 0.0

    def test_sign_follows_monotonicity(self):
        # f increasing in the treatment: lowering it must improve (positive)
        f = _monotone_f(1, 1, slope=3.0)
        x_bar = np.array([0.4, 0.6])
        down = ifee(f, self.H, self.gps, self.schema, x_bar, np.array([0.3]),
                    weighted=False)
        up = ifee(f, self.H, self.gps, self.schema, x_bar, np.array([0.9]),
                  weighted=False)
        assert down > 0 > up

    def test_antisymmetry(self):
        f = _monotone_f(1, 1, slope=1.7, weighted=True)
        rng = np.random.default_rng(1)
        x_bar = np.array([0.4, 0.5])
        for _ in range(10):
            a, b = rng.random(1), rng.random(1)
            xa = np.concatenate([x_bar[:1], a])
            xb = np.concatenate([x_bar[:1], b])
            ab = ifee(f, self.H, self.gps, self.schema, xa, b, weighted=True)
            ba = ifee(f, self.H, self.gps, self.schema, xb, a, weighted=True)
            assert abs(ab + ba) < 1e-15


class TestAverageAps:
    def test_identical_means_all_kept(self):
        pols = [_policy([0.7, 0.7], [0.6, 0.6], [0.4, 0.4]) for _ in range(8)]
        mean, kept = average_aps(pols)
        assert mean == pytest.approx(0.7)
        assert kept == 8

    def test_outlier_filtered(self):
        rng = np.random.default_rng(2)
        base = 0.5 + 0.01 * rng.standard_normal(99)
        pols = [_policy([b], [0.6], [0.4]) for b in base]
        s = float(np.std([float(np.mean(p.aps_star.density)) for p in pols]))
        outlier = float(np.mean(base)) + 10 * s
        pols.append(_policy([outlier], [0.6], [0.4]))
        sd_all = float(np.std([float(p.aps_star.density[0]) for p in pols]))
        assert abs(outlier - np.mean([p.aps_star.density[0] for p in pols])) > 3 * sd_all
        mean, kept = average_aps(pols)
        assert kept == 99

    def test_single_policy(self):
        mean, kept = average_aps([_policy([0.41, 0.43], [0.6, 0.6], [0.4, 0.4])])
        assert mean == pytest.approx(0.42)
        assert kept == 1

    def test_adjusted_treatments_only(self):
        # only the moved coordinate's density enters the instance mean
        pol = _policy([0.9, 0.1], [0.6, 0.4], [0.4, 0.4])
        mean, kept = average_aps([pol])
        assert mean == pytest.approx(0.9)

    def test_empty_policy_falls_back_to_all(self):
        pol = _policy([0.9, 0.1], [0.4, 0.4], [0.4, 0.4])
        mean, kept = average_aps([pol])
        assert mean == pytest.approx(0.5)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            average_aps([])


class TestTreatmentFrequency:
    def test_no_adjustment_zero_counts(self):
        pols = [_policy([0.5], [0.4], [0.4]) for _ in range(5)]
        counts = treatment_frequency(pols, [np.array([0.4])] * 5)
        assert counts.tolist() == [0]

    def test_infinite_threshold(self):
        pols = [_policy([0.5, 0.5], [0.9, 0.1], [0.1, 0.9]) for _ in range(4)]
        counts = treatment_frequency(pols, [np.array([0.1, 0.9])] * 4,
                                     threshold=np.inf)
        assert counts.tolist() == [0, 0]

    def test_counts(self):
        pols = [_policy([0.5, 0.5], [0.9, 0.4], [0.1, 0.4]),
                _policy([0.5, 0.5], [0.2, 0.8], [0.1, 0.4])]
        counts = treatment_frequency(pols, [np.array([0.1, 0.4])] * 2)
        assert counts.tolist() == [2, 1]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            treatment_frequency([_policy([0.5], [0.4], [0.4])], [])


class TestCellGrid:
    def test_lambda_applies_only_to_g(self):
        cells = _cell_grid([Variant.G, Variant.NON_CAUSAL_F], [1, 2],
                           [0.0, 0.5, 1.0])
        g_cells = [c for c in cells if c[0] is Variant.G]
        f_cells = [c for c in cells if c[0] is Variant.NON_CAUSAL_F]
        assert len(g_cells) == 6 and len(f_cells) == 2


SMALL_SETTINGS = TrainSettings(folds=2, arch_grid=((4,),), epochs=25,
                               gp_restarts=1)


@pytest.fixture(scope="module")
def tiny_ds():
    return make_dataset(n=36, n_c=2, n_i=1, n_t=2, seed=17)


class TestRunExperiment:
    def test_zero_budget_zero_ifee(self, tiny_ds):
        rep = run_experiment(tiny_ds, budgets=[0.0], lambdas=[0.5],
                             variants=list(Variant), seed=5,
                             settings=SMALL_SETTINGS, max_iters=40)
        assert len(rep.cells) == 4
        for c in rep.cells:
            assert c.ifee_mean == 0.0
            assert c.freq_counts == (0, 0)
            assert c.n_failed == 0

    def test_deterministic_bitwise(self, tiny_ds):
        kw = dict(budgets=[0.0, 0.4], lambdas=[0.5], variants=["g", "f"],
                  seed=9, settings=SMALL_SETTINGS, max_iters=40)
        r1 = run_experiment(tiny_ds, **kw)
        r2 = run_experiment(tiny_ds, **kw)
        assert json.dumps(report_to_dict(r1), sort_keys=True) == \
               json.dumps(report_to_dict(r2), sort_keys=True)

    def test_requires_normalized(self, tiny_ds):
        from causalinv.data import Dataset
        raw = Dataset(X=tiny_ds.X, y=tiny_ds.y, schema=tiny_ds.schema)
        with pytest.raises(ValueError, match="normalized"):
            run_experiment(raw, budgets=[1.0], lambdas=[0.0], variants=["g"],
                           seed=0, settings=SMALL_SETTINGS)

    def test_empty_budgets_rejected(self, tiny_ds):
        with pytest.raises(ValueError, match="budget"):
            run_experiment(tiny_ds, budgets=[], lambdas=[0.0], variants=["g"],
                           seed=0, settings=SMALL_SETTINGS)

    def test_sweep_csv_row_count(self, tiny_ds, tmp_path):
        rep = run_experiment(tiny_ds, budgets=[0.0, 0.4], lambdas=[0.0, 0.5],
                             variants=["g", "f"], seed=9,
                             settings=SMALL_SETTINGS, max_iters=40)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rep, path)
        lines = path.read_text().strip().splitlines()
        # header + 2 metrics x (2 budgets x 2 lambdas for g + 2 budgets for f)
        assert len(lines) == 1 + 2 * (2 * 2 + 2)
        assert lines[0] == "variant,budget,lambda,metric,value"
