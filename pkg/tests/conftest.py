import numpy as np
import pytest

from causalinv.data import Dataset, FeatureSchema


def make_schema(n_c, n_i, n_t, cost_up=None, cost_down=None, lower=None,
                upper=None):
    p = n_c + n_i + n_t
    ones = np.ones(n_t)
    return FeatureSchema(
        control_idx=tuple(range(n_c)),
        indirect_idx=tuple(range(n_c, n_c + n_i)),
        treatment_idx=tuple(range(n_c + n_i, p)),
        cost_up=np.asarray(cost_up) if cost_up is not None else ones.copy(),
        cost_down=np.asarray(cost_down) if cost_down is not None else ones.copy(),
        lower=np.asarray(lower) if lower is not None else np.zeros(n_t),
        upper=np.asarray(upper) if upper is not None else ones.copy(),
        feature_names=tuple(f"c{j}" for j in range(n_c))
        + tuple(f"i{j}" for j in range(n_i))
        + tuple(f"t{j}" for j in range(n_t)),
    )


def make_dataset(n=60, n_c=2, n_i=1, n_t=2, seed=0, informative=True):
    """Small normalized dataset with a learnable outcome and assignment."""
    rng = np.random.default_rng(seed)
    Xc = rng.random((n, n_c))
    Xt = np.clip(0.35 + 0.4 * Xc[:, [0] * n_t] + rng.normal(0, 0.12, (n, n_t)),
                 0, 1)
    Xi = np.clip(0.3 * Xc[:, [0] * n_i] + 0.5 * Xt[:, [0] * n_i]
                 + rng.normal(0, 0.05, (n, n_i)), 0, 1)
    X = np.concatenate([Xc, Xi, Xt], axis=1)
    if informative:
        logits = 2.0 * Xc[:, 0] - 3.0 * Xt[:, 0] + 1.2 * Xt[:, -1] - 0.2
        y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(np.int64)
    else:
        y = rng.integers(0, 2, n)
    if y.min() == y.max():  # keep both classes present
        y[0] = 1 - y[0]
    schema = make_schema(n_c, n_i, n_t)
    norm = np.column_stack([np.zeros(X.shape[1]), np.ones(X.shape[1])])
    return Dataset(X=X, y=y, schema=schema, norm_params=norm)


@pytest.fixture(scope="session")
def small_ds():
    return make_dataset(n=60, seed=3)


@pytest.fixture(scope="session")
def student_ds():
    import causalinv as ci
    import os
    root = os.path.join(os.path.dirname(__file__), "..", "data")
    return ci.normalize(ci.load_dataset(os.path.join(root, "students.csv"),
                                        os.path.join(root, "students_schema.json")))
