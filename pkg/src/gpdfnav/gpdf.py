"""Gaussian-process distance fields with a squared-exponential kernel.

A GP is fitted to surface points with every observation equal to one, which
gives a smooth occupancy field that peaks on the surface. Inverting the SE
kernel maps occupancy back to Euclidean distance:

    o(x) = k_xX (K_XX + sigma_o2 I)^-1 1
    d(x) = sqrt(-2 l^2 log(o(x) / sigma_f2))

The implementation works in the log domain: the largest kernel value is
factored out before summing so that far-field occupancy never underflows.
Works for 2D and 3D training sets alike.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

GRAD_EPS = 1e-6
DEFAULT_D_MAX_FACTOR = 20.0
# Queries are evaluated in row chunks to bound the (m, n) temporaries.
_CHUNK_ELEMS = 2_000_000


class FactorizationError(np.linalg.LinAlgError):
    """Raised when the regularised kernel matrix is not positive definite."""

    def __init__(self, pivot, n):
        self.pivot = pivot
        super().__init__(
            f"kernel matrix is not positive definite: Cholesky pivot {pivot} "
            f"of {n} is near-singular (duplicate training points with "
            f"sigma_o2 = 0?)"
        )


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float
    sigma_f2: float = 1.0
    sigma_o2: float = 1e-4

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be > 0, got {self.lengthscale}")
        if not self.sigma_f2 > 0:
            raise ValueError(f"sigma_f2 must be > 0, got {self.sigma_f2}")
        if not self.sigma_o2 >= 0:
            raise ValueError(f"sigma_o2 must be >= 0, got {self.sigma_o2}")


@dataclass(frozen=True)
class DistResult:
    occupancy: float
    distance: float
    gradient: np.ndarray


@dataclass(frozen=True, eq=False)
class GpdfModel:
    """A fitted distance field. Treat as immutable."""

    train: np.ndarray
    params: KernelParams
    factor: np.ndarray
    alpha: np.ndarray
    d_max: float = field(default=np.inf)

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    @property
    def n(self) -> int:
        return self.train.shape[0]

    @property
    def log_o_min(self) -> float:
        """Lower clamp on log(o / sigma_f2)."""
        l = self.params.lengthscale
        return -(self.d_max**2) / (2.0 * l * l)


def se_kernel(a, b, params: KernelParams) -> float:
    """k(a, b) = sigma_f2 * exp(-|a - b|^2 / (2 l^2))."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = float(np.sum((a - b) ** 2))
    return params.sigma_f2 * np.exp(-sq / (2.0 * params.lengthscale**2))


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    sq = cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
    return params.sigma_f2 * np.exp(-sq / (2.0 * params.lengthscale**2))


def mean_nn_spacing(points) -> float:
    """Average distance from each point to its nearest distinct neighbour."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise ValueError("need at least two points to measure spacing")
    tree = cKDTree(pts)
    k = min(len(pts), 8)
    dist, _ = tree.query(pts, k=k)
    dist = np.where(dist > 0, dist, np.inf)
    nn = dist.min(axis=1)
    nn = nn[np.isfinite(nn)]
    if len(nn) == 0:
        raise ValueError("all points coincide; spacing undefined")
    return float(nn.mean())


def default_lengthscale(points) -> float:
    """Twice the average nearest-neighbour spacing of the training set."""
    return 2.0 * mean_nn_spacing(points)


def fit(
    points,
    params: KernelParams | None = None,
    *,
    d_max: float | None = None,
) -> GpdfModel:
    """Fit the occupancy GP to surface points.

    If ``params`` is None the lengthscale is set from the point spacing and
    the variances take their defaults. ``d_max`` caps reverted distances and
    defaults to 20 lengthscales.
    """
    X = np.ascontiguousarray(np.asarray(points, dtype=float))
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("points must be a non-empty (n, dim) array")
    if X.shape[1] not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("training points must be finite")
    if params is None:
        params = KernelParams(lengthscale=default_lengthscale(X))
    if d_max is None:
        d_max = DEFAULT_D_MAX_FACTOR * params.lengthscale

    n = X.shape[0]
    K = kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.sigma_o2
    factor, info = lapack.dpotrf(K, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        raise FactorizationError(info - 1, n)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    # Tiny positive pivots pass dpotrf but give a useless solve.
    diag = np.diag(factor)
    tiny = np.flatnonzero(diag <= np.sqrt(np.finfo(float).eps) * np.sqrt(params.sigma_f2) * 1e-4)
    if len(tiny):
        raise FactorizationError(int(tiny[0]), n)
    alpha, info = lapack.dpotrs(factor, np.ones(n), lower=1)
    if info != 0:
        raise ValueError(f"dpotrs failed with info={info}")
    return GpdfModel(train=X, params=params, factor=factor, alpha=alpha, d_max=float(d_max))


def revert(o, params: KernelParams, d_max: float = np.inf):
    """Map occupancy to distance, clamping o into [o_min, sigma_f2]."""
    o = np.asarray(o, dtype=float)
    l2 = params.lengthscale**2
    log_min = -(d_max**2) / (2.0 * l2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(np.where(o > 0, o, 0.0) / params.sigma_f2)
    ratio = np.clip(np.nan_to_num(ratio, nan=log_min, neginf=log_min), log_min, 0.0)
    d = np.sqrt(-2.0 * l2 * ratio) + 0.0
    return float(d) if d.ndim == 0 else d


def _log_occupancy(model: GpdfModel, Q: np.ndarray, want_grad: bool):
    """Return log(o/sigma_f2), and optionally the weighted offset sum.

    With e_j = exp(-(r_j^2 - r_min^2) / 2l^2) and S = sum_j alpha_j e_j,
    log(o/sigma_f2) = -r_min^2/2l^2 + log S, and
    grad d = (q S - sum_j alpha_j e_j p_j) / (S d).
    """
    l2 = model.params.lengthscale**2
    e = cdist(Q, model.train, "sqeuclidean")
    rmin = e.min(axis=1)
    e -= rmin[:, None]
    e *= -1.0 / (2.0 * l2)
    np.exp(e, out=e)
    S = e @ model.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(S > 0, -rmin / (2.0 * l2) + np.log(np.where(S > 0, S, 1.0)), -np.inf)
    if not want_grad:
        return logr, None, None
    wp = e @ (model.alpha[:, None] * model.train)
    return logr, S, wp


def _evaluate(model: GpdfModel, queries, want_grad: bool):
    Q = np.asarray(queries, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != model.dim:
        raise ValueError(f"queries must be (m, {model.dim}), got {Q.shape}")
    m = Q.shape[0]
    logr = np.empty(m)
    d = np.empty(m)
    grad = np.zeros((m, model.dim))
    if m == 0:
        return logr, d, grad
    l2 = model.params.lengthscale**2
    lo = model.log_o_min
    step = max(1, _CHUNK_ELEMS // max(model.n, 1))
    for s in range(0, m, step):
        q = Q[s : s + step]
        lr, S, wp = _log_occupancy(model, q, want_grad)
        logr[s : s + step] = lr
        clamped = np.clip(np.nan_to_num(lr, nan=lo, neginf=lo), lo, 0.0)
        dist = np.sqrt(-2.0 * l2 * clamped) + 0.0  # no -0.0
        d[s : s + step] = dist
        if want_grad:
            ok = (dist >= GRAD_EPS) & (lr > lo) & (lr < 0.0)
            if np.any(ok):
                num = q[ok] * S[ok, None] - wp[ok]
                grad[s : s + step][ok] = num / (S[ok, None] * dist[ok, None])
    return logr, d, grad


def infer_occupancy(model: GpdfModel, query) -> float:
    q = np.atleast_2d(np.asarray(query, dtype=float))
    logr, _, _ = _evaluate(model, q, want_grad=False)
    return float(model.params.sigma_f2 * np.exp(logr[0]))


def infer_distance(model: GpdfModel, query) -> float:
    q = np.atleast_2d(np.asarray(query, dtype=float))
    _, d, _ = _evaluate(model, q, want_grad=False)
    return float(d[0])


def distances(model: GpdfModel, queries) -> np.ndarray:
    """Vectorised distance for an (m, dim) array."""
    return _evaluate(model, np.atleast_2d(queries), want_grad=False)[1]


def distances_and_gradients(model: GpdfModel, queries):
    """Vectorised (distance (m,), gradient (m, dim)) for an (m, dim) array."""
    _, d, g = _evaluate(model, np.atleast_2d(queries), want_grad=True)
    return d, g


def infer_distance_gradient(model: GpdfModel, query) -> DistResult:
    return infer_batch(model, np.atleast_2d(np.asarray(query, dtype=float)))[0]


def infer_batch(model: GpdfModel, queries) -> list[DistResult]:
    Q = np.asarray(queries, dtype=float)
    if Q.size == 0:
        return []
    logr, d, g = _evaluate(model, Q.reshape(-1, model.dim), want_grad=True)
    occ = model.params.sigma_f2 * np.exp(logr)
    return [DistResult(float(o), float(di), gi.copy()) for o, di, gi in zip(occ, d, g)]


def save_model(model: GpdfModel, path) -> None:
    """Write the model as an ``.npz`` container.

    Stored arrays: ``train`` (n, dim), ``alpha`` (n,), and ``meta``, a JSON
    string with ``dim``, ``lengthscale``, ``sigma_f2``, ``sigma_o2`` and
    ``d_max``. The Cholesky factor is recomputed on load.
    """
    np.savez(path, **model_arrays(model))


def model_arrays(model: GpdfModel, prefix: str = "") -> dict:
    meta = {
        "dim": model.dim,
        "lengthscale": model.params.lengthscale,
        "sigma_f2": model.params.sigma_f2,
        "sigma_o2": model.params.sigma_o2,
        "d_max": model.d_max,
    }
    return {
        prefix + "train": model.train,
        prefix + "alpha": model.alpha,
        prefix + "meta": np.array(json.dumps(meta)),
    }


def model_from_arrays(arrays, prefix: str = "") -> GpdfModel:
    meta = json.loads(str(arrays[prefix + "meta"]))
    params = KernelParams(meta["lengthscale"], meta["sigma_f2"], meta["sigma_o2"])
    model = fit(arrays[prefix + "train"], params, d_max=meta["d_max"])
    stored = np.asarray(arrays[prefix + "alpha"])
    if not np.allclose(stored, model.alpha, rtol=1e-8, atol=1e-12):
        raise ValueError("stored alpha does not match the refitted model")
    return model


def load_model(path) -> GpdfModel:
    with np.load(Path(path), allow_pickle=False) as data:
        return model_from_arrays(data)
