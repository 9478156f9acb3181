"""Per-treatment Gaussian-process assignment models and the propensity density.

Each treatment gets an independent GP regression of its observed values on the
control features (squared-exponential kernel, constant or zero mean). The
reconstructed predictive distribution at a query point yields a Gaussian
density of any candidate treatment value -- the approximate propensity score
-- together with its analytic derivative, and the elementwise weighting that
multiplies treatment values by their propensity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SQRT_2PI = np.sqrt(2.0 * np.pi)
STD_FLOOR = 1e-6
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

SERIAL_FORMAT = "causalinv-gp-1"


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential kernel hyperparameters and mean-function mode."""

    lengthscale: float
    signal_variance: float
    noise_variance: float
    mean_mode: str = "constant"  # "zero" | "constant"

    def __post_init__(self):
        if self.lengthscale <= 0:
            raise ValueError("lengthscale must be positive")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.mean_mode not in ("zero", "constant"):
            raise ValueError(f"unknown mean_mode {self.mean_mode!r}")


@dataclass(frozen=True)
class TreatmentGP:
    """One fitted assignment GP: hyperparameters plus cached training solve."""

    kernel: KernelConfig
    train_controls: np.ndarray
    train_targets: np.ndarray
    mean_const: float
    alpha: np.ndarray
    chol: np.ndarray
    jitter: float
    log_marginal: float


@dataclass(frozen=True)
class ApsResult:
    """Per-treatment predictive moments, propensity density and its gradient."""

    mean: np.ndarray
    std: np.ndarray
    density: np.ndarray
    density_grad: np.ndarray


def _sqdist(A, B):
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _chol_with_jitter(K):
    """Cholesky of K, escalating an added diagonal jitter on failure."""
    for jit in JITTERS:
        try:
            return np.linalg.cholesky(K + jit * np.eye(K.shape[0])), jit
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "Cholesky factorization failed even with jitter 1e-4")


def _cho_solve(L, B):
    z = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, z)


def _factorize(controls, resid, ls, sv, nv, sqd=None):
    """Kernel matrix, Cholesky, alpha and log marginal likelihood."""
    m = controls.shape[0]
    if sqd is None:
        sqd = _sqdist(controls, controls)
    K = sv * np.exp(-0.5 * sqd / (ls * ls))
    L, jit = _chol_with_jitter(K + nv * np.eye(m))
    alpha = _cho_solve(L, resid)
    lml = (-0.5 * float(resid @ alpha)
           - float(np.sum(np.log(np.diag(L))))
           - 0.5 * m * np.log(2.0 * np.pi))
    return K, L, alpha, lml, jit


def _lml_and_grad(controls, resid, log_theta, sqd):
    """Log marginal likelihood and its gradient in (log ls, log sv, log nv)."""
    ls, sv, nv = np.exp(log_theta)
    m = controls.shape[0]
    try:
        K, L, alpha, lml, _ = _factorize(controls, resid, ls, sv, nv, sqd)
    except np.linalg.LinAlgError:
        return -np.inf, np.zeros(3)
    Kinv = _cho_solve(L, np.eye(m))
    A = np.outer(alpha, alpha) - Kinv
    # d lml / d theta_j = 0.5 tr(A dK/dtheta_j), in log-parameter coordinates
    g_ls = 0.5 * float(np.sum(A * (K * (sqd / (ls * ls)))))
    g_sv = 0.5 * float(np.sum(A * K))
    g_nv = 0.5 * nv * float(np.trace(A))
    return lml, np.array([g_ls, g_sv, g_nv])


def _ascend(controls, resid, theta0, sqd, iters, lr, bounds):
    """Adam ascent on the log marginal likelihood; best iterate visited wins."""
    theta = np.clip(theta0, bounds[:, 0], bounds[:, 1])
    best_lml, best_theta = -np.inf, theta.copy()
    m_t = np.zeros(3)
    v_t = np.zeros(3)
    for it in range(1, iters + 1):
        lml, grad = _lml_and_grad(controls, resid, theta, sqd)
        if lml > best_lml:
            best_lml, best_theta = lml, theta.copy()
        if not np.all(np.isfinite(grad)):
            break
        m_t = 0.9 * m_t + 0.1 * grad
        v_t = 0.999 * v_t + 0.001 * grad * grad
        mh = m_t / (1.0 - 0.9 ** it)
        vh = v_t / (1.0 - 0.999 ** it)
        theta = theta + lr * mh / (np.sqrt(vh) + 1e-8)
        theta = np.clip(theta, bounds[:, 0], bounds[:, 1])
    lml, _ = _lml_and_grad(controls, resid, theta, sqd)
    if lml > best_lml:
        best_lml, best_theta = lml, theta.copy()
    return best_lml, best_theta


def _optimize_hypers(controls, resid, start, seed, restarts=5, iters=60,
                     pilot_iters=15, lr=0.08):
    """Multi-start first-order ascent of the log marginal likelihood.

    Every start (the given hyperparameters, a median-distance heuristic and
    ``restarts`` seeded draws) gets a short pilot ascent; the best pilot
    continues for the full iteration budget. The best iterate ever visited
    wins, so the result is never worse than the starting hyperparameters.

    Search bounds are data-driven. In particular the noise variance is floored
    at 5% of the target variance and the lengthscale at 15% of the median
    pairwise distance: unbounded, the marginal likelihood of near-discrete
    treatments is happy to memorize the training rows (noise -> 0), which
    would make the propensity density at training points arbitrarily peaked
    while staying flat at query points.
    """
    sqd = _sqdist(controls, controls)
    med = np.sqrt(np.median(sqd[sqd > 0])) if np.any(sqd > 0) else 1.0
    var_t = max(float(np.var(resid)), 1e-8)
    bounds = np.log(np.array([
        [0.15 * med, 50.0 * med],
        [1e-3 * var_t, 30.0 * var_t],
        [0.05 * var_t, 2.0 * var_t],
    ]))
    rng = np.random.default_rng(seed)

    starts = [np.log(np.asarray(start))]
    starts.append(np.log([med, var_t, 0.1 * var_t]))  # median-heuristic start
    for _ in range(restarts):
        starts.append(np.array([
            rng.uniform(np.log(0.2 * med), np.log(10.0 * med)),
            rng.uniform(np.log(0.05 * var_t), np.log(5.0 * var_t)),
            rng.uniform(np.log(0.05 * var_t), np.log(0.8 * var_t)),
        ]))

    best_lml, best_theta = -np.inf, starts[0]
    for theta0 in starts:
        lml, theta = _ascend(controls, resid, theta0, sqd, pilot_iters, lr, bounds)
        if lml > best_lml:
            best_lml, best_theta = lml, theta
    lml, theta = _ascend(controls, resid, best_theta, sqd, iters, lr, bounds)
    if lml > best_lml:
        best_lml, best_theta = lml, theta
    return np.exp(best_theta), best_lml


def fit_gp(controls, treatment_values, config: KernelConfig,
           optimize_hypers: bool = True, seed: int = 0,
           restarts: int = 5) -> TreatmentGP:
    """Fit one treatment's assignment GP on the control features.

    With ``optimize_hypers`` the kernel hyperparameters are moved to a
    log-marginal-likelihood optimum found by multi-start gradient ascent
    (``restarts`` seeded restarts on top of the given and median-heuristic
    starting points).
    """
    controls = np.asarray(controls, dtype=np.float64)
    t = np.asarray(treatment_values, dtype=np.float64).ravel()
    if controls.ndim != 2:
        raise ValueError("controls must be a 2-D matrix")
    m = controls.shape[0]
    if m < 2:
        raise ValueError("need at least 2 training rows to fit a GP")
    if t.shape[0] != m:
        raise ValueError("treatment_values length does not match controls")
    if not np.all(np.isfinite(controls)) or not np.all(np.isfinite(t)):
        raise ValueError("training data must be finite")

    mean_const = float(np.mean(t)) if config.mean_mode == "constant" else 0.0
    resid = t - mean_const

    ls, sv, nv = config.lengthscale, config.signal_variance, config.noise_variance
    if optimize_hypers:
        (ls, sv, nv), _ = _optimize_hypers(
            controls, resid, (ls, sv, max(nv, 1e-9)), seed=seed, restarts=restarts)
        config = KernelConfig(lengthscale=float(ls), signal_variance=float(sv),
                              noise_variance=float(nv), mean_mode=config.mean_mode)

    _, L, alpha, lml, jit = _factorize(controls, resid, ls, sv, nv)
    return TreatmentGP(kernel=config, train_controls=controls, train_targets=t,
                       mean_const=mean_const, alpha=alpha, chol=L,
                       jitter=jit, log_marginal=lml)


def log_marginal_likelihood(gp: TreatmentGP) -> float:
    return gp.log_marginal


def predict(gp: TreatmentGP, x_C) -> tuple:
    """Predictive mean and standard deviation at one query point.

    The variance includes the fitted observation noise (the propensity density
    is over observed treatment values); the std is floored at 1e-6.
    """
    means, stds = predict_batch(gp, np.asarray(x_C, dtype=np.float64)[None, :])
    return float(means[0]), float(stds[0])


def predict_batch(gp: TreatmentGP, X_C) -> tuple:
    """Vectorized :func:`predict` over the rows of ``X_C``."""
    X_C = np.asarray(X_C, dtype=np.float64)
    ls = gp.kernel.lengthscale
    sv = gp.kernel.signal_variance
    sqd = _sqdist(X_C, gp.train_controls)
    ks = sv * np.exp(-0.5 * sqd / (ls * ls))
    means = gp.mean_const + ks @ gp.alpha
    v = np.linalg.solve(gp.chol, ks.T)
    var = sv + gp.kernel.noise_variance - np.sum(v * v, axis=0)
    stds = np.sqrt(np.maximum(var, STD_FLOOR * STD_FLOOR))
    return means, np.maximum(stds, STD_FLOOR)


def treatment_profile(gps, x_C) -> tuple:
    """Stack (mean, std) of each treatment's GP at one control vector."""
    pairs = [predict(gp, x_C) for gp in gps]
    means = np.array([p[0] for p in pairs])
    stds = np.array([p[1] for p in pairs])
    return means, stds


def aps(x_T, means, stds) -> np.ndarray:
    """Approximate propensity score: Gaussian density of each treatment value
    under its reconstructed predictive distribution, independently per
    treatment."""
    x_T = np.asarray(x_T, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if np.any(stds <= 0):
        raise ValueError("predictive stds must be positive")
    z = (x_T - means) / stds
    return np.exp(-0.5 * z * z) / (SQRT_2PI * stds)


def aps_gradient(x_T, means, stds) -> np.ndarray:
    """Derivative of :func:`aps` with respect to each treatment value."""
    phi = aps(x_T, means, stds)
    x_T = np.asarray(x_T, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    return -phi * (x_T - means) / (stds * stds)


def weight_treatments(x_T, phi) -> np.ndarray:
    """Elementwise propensity weighting of a treatment vector."""
    x_T = np.asarray(x_T, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if x_T.shape != phi.shape:
        raise ValueError("treatment vector and APS vector lengths differ")
    return phi * x_T


def make_aps_result(x_T, means, stds) -> ApsResult:
    """Bundle the predictive moments with density and gradient at ``x_T``."""
    x_T = np.asarray(x_T, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    density = aps(x_T, means, stds)
    return ApsResult(mean=means, std=stds, density=density,
                     density_grad=-density * (x_T - means) / (stds * stds))


def gp_to_dict(gp: TreatmentGP) -> dict:
    return {
        "format": SERIAL_FORMAT,
        "lengthscale": gp.kernel.lengthscale,
        "signal_variance": gp.kernel.signal_variance,
        "noise_variance": gp.kernel.noise_variance,
        "mean_mode": gp.kernel.mean_mode,
        "train_controls": gp.train_controls.tolist(),
        "train_targets": gp.train_targets.tolist(),
    }


def gp_from_dict(doc: dict) -> TreatmentGP:
    if doc.get("format") != SERIAL_FORMAT:
        raise ValueError(f"unsupported GP document format {doc.get('format')!r}")
    config = KernelConfig(lengthscale=doc["lengthscale"],
                          signal_variance=doc["signal_variance"],
                          noise_variance=doc["noise_variance"],
                          mean_mode=doc["mean_mode"])
    # alpha and the Cholesky factor are recomputed, not stored
    return fit_gp(np.asarray(doc["train_controls"], dtype=np.float64),
                  np.asarray(doc["train_targets"], dtype=np.float64),
                  config, optimize_hypers=False)


def save_gp(gp: TreatmentGP, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(gp_to_dict(gp), fh, sort_keys=True)


def load_gp(path) -> TreatmentGP:
    with open(path, "r", encoding="utf-8") as fh:
        return gp_from_dict(json.load(fh))
