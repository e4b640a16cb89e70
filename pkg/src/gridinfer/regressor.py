"""Ridge regression of hidden injections on observed ones, and weight analysis."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

from .dataset import RegressionProblem
from .errors import FitError

# numerically zero singular values are dropped (pseudo-inverse) when alpha == 0
_SV_RCOND = 1e-13


@dataclass(frozen=True)
class RidgeModel:
    """Weights ``W`` of shape ``(F+1, T)``; the last row holds the bias terms."""

    W: np.ndarray
    alpha: float
    feature_labels: tuple[str, ...]
    target_labels: tuple[str, ...]
    train_mean: np.ndarray
    train_std: np.ndarray
    singular_values: tuple[float, float] = (math.nan, math.nan)  # (smallest, largest) of X_train

    def __post_init__(self) -> None:
        W = np.array(self.W, dtype=float)
        if W.shape != (len(self.feature_labels) + 1, len(self.target_labels)):
            raise FitError(f"weight shape {W.shape} does not match labels")
        if not np.all(np.isfinite(W)):
            raise FitError("non-finite weights")
        std = np.array(self.train_std, dtype=float)
        if np.any(~(std > 0)):
            bad = [self.target_labels[k] for k in np.flatnonzero(~(std > 0))]
            raise FitError(f"constant training targets cannot be normalized: {bad}")
        W.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "train_std", std)
        object.__setattr__(self, "train_mean", np.array(self.train_mean, dtype=float))

    @property
    def weights(self) -> np.ndarray:
        """Feature weights without the bias row."""
        return self.W[:-1]

    @property
    def bias(self) -> np.ndarray:
        return self.W[-1]


def _svd(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return np.linalg.svd(X, full_matrices=False)


def _ridge_from_svd(U, s, Vt, Y, alpha: float) -> np.ndarray:
    if alpha > 0:
        d = s / (s * s + alpha)
    else:
        keep = s > _SV_RCOND * (s[0] if s.size else 0.0)
        d = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return Vt.T @ (d[:, None] * (U.T @ Y))


def ridge_weights(X: np.ndarray, Y: np.ndarray, alpha: float) -> np.ndarray:
    """``(X^T X + alpha I)^-1 X^T Y`` through the thin SVD ``X = U S V^T``.

    The identity spans every column, bias included.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if alpha < 0:
        raise FitError(f"alpha must be non-negative, got {alpha}")
    if X.shape[0] < 1:
        raise FitError("empty training set")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise FitError("non-finite training data")
    U, s, Vt = _svd(X)
    return _ridge_from_svd(U, s, Vt, Y, alpha)


def _standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X[:, :-1].mean(axis=0)
    sd = X[:, :-1].std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def fit(problem: RegressionProblem, alpha: float, *, standardize: bool = False) -> RidgeModel:
    """Ridge fit on the training rows of ``problem``.

    With ``standardize`` the feature columns (not the bias) are centred and
    scaled before the fit and the transformation is folded back into ``W``,
    so the model still applies to raw feature rows.
    """
    X, Y = problem.X_train, problem.Y_train
    if X.shape[0] < 1:
        raise FitError("empty training set")
    if alpha < 0:
        raise FitError(f"alpha must be non-negative, got {alpha}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise FitError("non-finite training data")
    if standardize:
        mu, sd = _standardization(X)
        Xs = X.copy()
        Xs[:, :-1] = (X[:, :-1] - mu) / sd
    else:
        Xs = X
    U, s, Vt = _svd(Xs)
    W = _ridge_from_svd(U, s, Vt, Y, alpha)
    if standardize:
        Wf = W[:-1] / sd[:, None]
        W = np.vstack([Wf, W[-1:] - mu @ Wf])
    return _model(problem, W, alpha, Y, s)


def _model(problem: RegressionProblem, W, alpha, Y, s) -> RidgeModel:
    std = Y.std(axis=0, ddof=1) if Y.shape[0] > 1 else np.zeros(Y.shape[1])
    return RidgeModel(
        W=W,
        alpha=float(alpha),
        feature_labels=tuple(problem.feature_labels),
        target_labels=tuple(problem.target_labels),
        train_mean=Y.mean(axis=0),
        train_std=std,
        singular_values=(float(s.min()), float(s.max())) if s.size else (math.nan, math.nan),
    )


def predict(model: RidgeModel, X_rows: np.ndarray) -> np.ndarray:
    """``X_rows @ W``; rows must include the trailing bias column."""
    X_rows = np.atleast_2d(np.asarray(X_rows, dtype=float))
    if X_rows.shape[1] != model.W.shape[0]:
        raise ValueError(f"expected {model.W.shape[0]} columns (features + bias), got {X_rows.shape[1]}")
    return X_rows @ model.W


def nrmse(y_true: np.ndarray, y_hat: np.ndarray, train_std: np.ndarray | float) -> np.ndarray:
    """Per-column RMS error divided by the training standard deviation."""
    y_true = np.asarray(y_true, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_true.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y_true.shape} vs {y_hat.shape}")
    std = np.asarray(train_std, dtype=float)
    if np.any(~(std > 0)):
        raise ValueError("train_std must be positive")
    return np.sqrt(np.mean((y_true - y_hat) ** 2, axis=0)) / std


def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None  # JSON has no NaN


@dataclass(frozen=True)
class FitReport:
    target_labels: tuple[str, ...]
    nrmse_train: np.ndarray
    nrmse_test: np.ndarray
    alpha_used: float
    sv_min: float
    sv_max: float

    @property
    def condition_number(self) -> float:
        return self.sv_max / self.sv_min if self.sv_min > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha_used,
            "condition": {"sv_min": self.sv_min, "sv_max": self.sv_max},
            "targets": [
                {"label": lab, "nrmse_train": _num(tr), "nrmse_test": _num(te)}
                for lab, tr, te in zip(self.target_labels, self.nrmse_train, self.nrmse_test)
            ],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "nrmse_train", "nrmse_test"])
            for lab, tr, te in zip(self.target_labels, self.nrmse_train, self.nrmse_test):
                w.writerow([lab, repr(float(tr)), repr(float(te))])


def evaluate(
    model: RidgeModel, problem: RegressionProblem, train_std: np.ndarray | None = None
) -> FitReport:
    """Train and test NRMSE of ``model`` on ``problem``.

    Normalized by the model's training standard deviations unless
    ``train_std`` is given.  An empty test partition yields NaN test scores.
    """
    std = model.train_std if train_std is None else np.asarray(train_std, dtype=float)
    tr = nrmse(problem.Y_train, predict(model, problem.X_train), std)
    if problem.split.test.size:
        te = nrmse(problem.Y_test, predict(model, problem.X_test), std)
    else:
        te = np.full(len(model.target_labels), np.nan)
    lo, hi = model.singular_values
    return FitReport(model.target_labels, tr, te, model.alpha, lo, hi)


def grid_search_alpha(
    problem: RegressionProblem, alpha_grid: Sequence[float]
) -> tuple[float, list[FitReport]]:
    """Pick the alpha with the lowest mean test NRMSE (first one on ties).

    The training SVD is computed once and reused across the grid.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise FitError("empty alpha grid")
    if any(a < 0 for a in grid):
        raise FitError("alpha values must be non-negative")
    if problem.split.test.size == 0:
        raise FitError("grid search needs test rows")
    X, Y = problem.X_train, problem.Y_train
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise FitError("non-finite training data")
    U, s, Vt = _svd(X)
    reports = []
    for a in grid:
        model = _model(problem, _ridge_from_svd(U, s, Vt, Y, a), a, Y, s)
        reports.append(evaluate(model, problem))
    scores = [float(np.mean(r.nrmse_test)) for r in reports]
    best = int(np.argmin(scores))
    return grid[best], reports


def save_model(model: RidgeModel, prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>.json`` (labels, alpha, training statistics) and ``<prefix>.npy`` (W)."""
    prefix = Path(prefix)
    meta_path = prefix.with_name(prefix.name + ".json")
    w_path = prefix.with_name(prefix.name + ".npy")
    meta = {
        "alpha": model.alpha,
        "feature_labels": list(model.feature_labels),
        "target_labels": list(model.target_labels),
        "train_mean": [float(x) for x in model.train_mean],
        "train_std": [float(x) for x in model.train_std],
        "singular_values": list(model.singular_values),
        "weights_file": w_path.name,
        "weights_shape": list(model.W.shape),
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    np.save(w_path, np.ascontiguousarray(model.W, dtype="<f8"), allow_pickle=False)
    return meta_path, w_path


def load_model(prefix: str | Path) -> RidgeModel:
    prefix = Path(prefix)
    meta = json.loads(prefix.with_name(prefix.name + ".json").read_text(encoding="utf-8"))
    W = np.load(prefix.with_name(meta["weights_file"]), allow_pickle=False)
    return RidgeModel(
        W=W,
        alpha=meta["alpha"],
        feature_labels=tuple(meta["feature_labels"]),
        target_labels=tuple(meta["target_labels"]),
        train_mean=np.array(meta["train_mean"]),
        train_std=np.array(meta["train_std"]),
        singular_values=tuple(meta["singular_values"]),
    )


# ---------------------------------------------------------------- weight histogram


@dataclass(frozen=True)
class PeakFit:
    """Fitted peak ``a * shape((x - x0) / width)`` with its reduced chi-square."""

    family: str  # "gaussian" | "lorentzian"
    a: float
    x0: float
    width: float  # sigma for the Gaussian, gamma for the Lorentzian
    chi2_r: float


@dataclass(frozen=True)
class WeightHistogramFit:
    edges: np.ndarray
    counts: np.ndarray
    gaussian: PeakFit
    lorentzian: PeakFit
    selected: PeakFit = field(init=False)

    def __post_init__(self) -> None:
        best = min((self.gaussian, self.lorentzian), key=lambda f: abs(f.chi2_r - 1.0))
        object.__setattr__(self, "selected", best)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_dict(self) -> dict:
        def fit_dict(f: PeakFit) -> dict:
            return {"a": f.a, "x0": f.x0, "width": f.width, "chi2_r": f.chi2_r}

        return {
            "bins": int(self.counts.size),
            "n_weights": int(self.counts.sum()),
            "gaussian": fit_dict(self.gaussian),
            "lorentzian": fit_dict(self.lorentzian),
            "selected": self.selected.family,
        }


def gaussian(x, a, x0, sigma):
    """``a exp(-(x - x0)^2 / sigma^2)``."""
    return a * np.exp(-((x - x0) ** 2) / sigma**2)


def lorentzian(x, a, x0, gamma):
    """``a gamma^2 / (gamma^2 + (x - x0)^2)``."""
    return a * gamma**2 / (gamma**2 + (x - x0) ** 2)


# Bin-averaged versions: the peak shapes integrated over each bin and divided
# by the bin width, so coarse bins do not bias the fitted widths.
def _gaussian_binned(lo, hi, a, x0, sigma):
    w = hi - lo
    return a * sigma * math.sqrt(math.pi) / 2 * (erf((hi - x0) / sigma) - erf((lo - x0) / sigma)) / w


def _lorentzian_binned(lo, hi, a, x0, gamma):
    w = hi - lo
    return a * gamma * (np.arctan((hi - x0) / gamma) - np.arctan((lo - x0) / gamma)) / w


def histogram_range(values: np.ndarray, coverage: float = 0.995) -> tuple[float, float]:
    """Range centred on the median holding ``coverage`` of the values."""
    med = float(np.median(values))
    r = float(np.quantile(np.abs(values - med), coverage))
    return med - r, med + r


def _fit_peak(family, lo, hi, counts, p0) -> PeakFit:
    model = _gaussian_binned if family == "gaussian" else _lorentzian_binned
    mask = counts > 0
    sig = np.sqrt(counts[mask])  # Poisson error of a bin count
    lo_m, hi_m, y = lo[mask], hi[mask], counts[mask]

    def resid(p):
        return (model(lo_m, hi_m, p[0], p[1], abs(p[2])) - y) / sig

    sol = least_squares(resid, p0, method="lm", x_scale="jac", max_nfev=2000)
    if not np.all(np.isfinite(sol.x)):
        raise FitError(f"{family} fit diverged")
    chi2 = float(np.sum(sol.fun**2))
    dof = int(mask.sum()) - 3
    a, x0, width = float(sol.x[0]), float(sol.x[1]), abs(float(sol.x[2]))
    return PeakFit(family, a, x0, width, chi2 / dof)


def analyze_weights(
    weights: RidgeModel | np.ndarray, bin_count: int = 101, *, coverage: float = 0.995
) -> WeightHistogramFit:
    """Histogram the weights and fit Gaussian and Lorentzian peaks.

    For a model, the feature weights of all targets are pooled and the bias
    row is left out.  Bins span the symmetric range around the median that
    holds ``coverage`` of the weights.  Each bin count gets error
    ``sqrt(count)``; empty bins are skipped.  ``chi2_r = chi2 / (bins - 3)``
    over non-empty bins, and the family with ``chi2_r`` nearest 1 is
    selected.  The damped least-squares fits start from the peak count, the
    mean and the standard deviation of the histogram.
    """
    w = weights.weights if isinstance(weights, RidgeModel) else np.asarray(weights, dtype=float)
    w = w.ravel()
    if w.size == 0 or not np.all(np.isfinite(w)):
        raise FitError("weights must be finite and non-empty")
    if np.ptp(w) == 0:
        raise FitError("degenerate histogram: all weights identical")
    lo_r, hi_r = histogram_range(w, coverage)
    if not hi_r > lo_r:
        raise FitError("degenerate histogram: weight spread is zero")
    counts, edges = np.histogram(w, bins=bin_count, range=(lo_r, hi_r))
    counts = counts.astype(float)
    if np.count_nonzero(counts) < 4:
        raise FitError("fewer than 4 non-empty bins; fit is underdetermined")

    centers = 0.5 * (edges[:-1] + edges[1:])
    mean = float(np.sum(counts * centers) / counts.sum())
    std = float(math.sqrt(np.sum(counts * (centers - mean) ** 2) / counts.sum()))
    std = std if std > 0 else float(edges[1] - edges[0])
    p0 = np.array([counts.max(), mean, std])
    lo, hi = edges[:-1], edges[1:]
    return WeightHistogramFit(
        edges=edges,
        counts=counts,
        gaussian=_fit_peak("gaussian", lo, hi, counts, p0),
        lorentzian=_fit_peak("lorentzian", lo, hi, counts, p0),
    )
