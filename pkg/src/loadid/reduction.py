"""Linear projections: FNPA-QR and the PCA / LDA / FLDA baselines.

FNPA-QR solves the generalized eigenproblem ``Yb h = lambda (Yw + ridge I) h``
on the fuzzy neighborhood scatters from :mod:`loadid.scatter`, keeps the top
``r`` directions and orthonormalizes them with a thin QR factorization.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DataError, NumericalError, ParseError
from .features import FeatureMatrix
from .scatter import default_k, fuzzy_memberships, scatter_pair

__all__ = [
    "Method",
    "Projection",
    "Directions",
    "RESIDUAL_TOL",
    "default_ridge",
    "trace_ratio",
    "trace_ratio_directions",
    "qr_orthogonalize",
    "lda_scatters",
    "fuzzy_scatters",
    "fit_fnpa_qr",
    "fit_pca",
    "fit_lda",
    "fit_flda",
    "fit_projection",
    "project",
    "save_projection",
    "load_projection",
]

RESIDUAL_TOL = 1e-6
BUNDLE_MAGIC = "# loadid-projection v1"


class Method(str, enum.Enum):
    FNPA_QR = "fnpa-qr"
    PCA = "pca"
    LDA = "lda"
    FLDA = "flda"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower().replace("_", "-"))
        except ValueError:
            raise DataError(
                f"unknown reduction method {name!r}; expected one of {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class Projection:
    basis: np.ndarray
    method: Method
    center: np.ndarray
    fit_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or not 1 <= basis.shape[1] <= basis.shape[0]:
            raise DataError(f"projection basis must be d x r with 1 <= r <= d, got {basis.shape}")
        center = np.asarray(self.center, dtype=float)
        if center.shape != (basis.shape[0],):
            raise DataError("projection center must have length d")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "method", Method.parse(self.method))

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def r(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class Directions:
    """Top generalized eigenvectors (unit columns) with their eigenvalues."""

    H: np.ndarray
    eigenvalues: np.ndarray
    residuals: np.ndarray
    ridge: float


def _sym(A, name) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DataError(f"{name} must be square")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise DataError(f"{name} must be symmetric")
    return 0.5 * (A + A.T)


def default_ridge(Yw, Yb=None) -> float:
    """``1e-6 * trace(Yw) / d``; falls back to ``Yb``'s trace when ``Yw`` vanishes."""
    d = Yw.shape[0]
    ridge = 1e-6 * float(np.trace(Yw)) / d
    if ridge <= 0 and Yb is not None:
        ridge = 1e-6 * float(np.trace(Yb)) / d
    return max(ridge, 0.0)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def trace_ratio(basis, Yw, Yb) -> float:
    """``trace(B.T Yb B) / trace(B.T Yw B)``."""
    num = float(np.trace(basis.T @ Yb @ basis))
    den = float(np.trace(basis.T @ Yw @ basis))
    if den <= 0:
        return np.inf if num > 0 else 0.0
    return num / den


def trace_ratio_directions(Yw, Yb, r: int, ridge: float | None = None) -> Directions:
    """Top-``r`` generalized eigenvectors of ``(Yb, Yw + ridge I)``.

    Columns are unit-norm, ordered by descending eigenvalue (ties keep the
    solver's order) and signed so their largest-magnitude entry is positive.
    Each eigenpair residual ``||Yb h - lambda (Yw + ridge I) h|| / ||Yb||`` is
    checked against ``RESIDUAL_TOL``.
    """
    Yw = _sym(Yw, "Yw")
    Yb = _sym(Yb, "Yb")
    d = Yw.shape[0]
    if Yb.shape != (d, d):
        raise DataError("Yw and Yb must have the same shape")
    if not 1 <= r <= d:
        raise DataError(f"r must satisfy 1 <= r <= d = {d}, got {r}")
    norm_b = np.linalg.norm(Yb, 2)
    if norm_b < 1e-12 * max(1.0, np.linalg.norm(Yw, 2)):
        raise NumericalError("degenerate between-class scatter")
    if ridge is None:
        ridge = default_ridge(Yw, Yb)
    if ridge < 0:
        raise DataError("ridge must be >= 0")
    A = Yw + ridge * np.eye(d)
    try:
        evals, evecs = scipy.linalg.eigh(Yb, A)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"within-class scatter is singular at ridge={ridge:g}; "
            f"only {np.linalg.matrix_rank(A)} of {d} directions available"
        ) from None
    order = np.argsort(-evals, kind="stable")[:r]
    lam = evals[order]
    H = evecs[:, order]
    H = _fix_signs(H / np.linalg.norm(H, axis=0))
    residuals = np.linalg.norm(Yb @ H - (A @ H) * lam, axis=0) / norm_b
    if np.any(residuals > RESIDUAL_TOL):
        raise NumericalError(
            f"generalized eigenpair residual {residuals.max():.3g} exceeds {RESIDUAL_TOL:g}"
        )
    return Directions(H, lam, residuals, float(ridge))


def qr_orthogonalize(H):
    """Thin QR ``H = Q R`` with ``diag(R) >= 0``.

    Returns
    -------
    Q, R
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] > H.shape[0]:
        raise DataError(f"H must be d x r with r <= d, got {H.shape}")
    sv = np.linalg.svd(H, compute_uv=False)
    deficient = int(np.count_nonzero(sv <= 1e-10 * sv.max())) if sv.max() > 0 else H.shape[1]
    if deficient:
        raise NumericalError(
            f"H is rank deficient: {deficient} of {H.shape[1]} columns are dependent"
        )
    Q, R = np.linalg.qr(H, mode="reduced")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, R * signs[:, None]


def _features(F) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(F, FeatureMatrix):
        return F.values, F.labels
    raise DataError("expected a FeatureMatrix")


def _check_supervised(labels):
    if np.unique(labels).size < 2:
        raise DataError("at least 2 classes are required")


def _default_r(labels, d) -> int:
    return max(1, min(np.unique(labels).size - 1, d))


def fit_fnpa_qr(F: FeatureMatrix, r: int | None = None, k: int | None = None,
                ridge: float | None = None) -> Projection:
    X, y = _features(F)
    _check_supervised(y)
    d = X.shape[1]
    r = _default_r(y, d) if r is None else int(r)
    k = default_k(y) if k is None else int(k)
    pair, model = scatter_pair(X, y, k)
    dirs = trace_ratio_directions(pair.Yw, pair.Yb, r, ridge)
    Q, R = qr_orthogonalize(dirs.H)
    meta = {
        "eigenvalues": dirs.eigenvalues.tolist(),
        "residuals": dirs.residuals.tolist(),
        "ridge": dirs.ridge,
        "k": k,
        "heat_t": model.heat_t,
        "trace_ratio": trace_ratio(Q, pair.Yw, pair.Yb),
        "qr_reconstruction_error": float(np.abs(Q @ R - dirs.H).max()),
    }
    return Projection(Q, Method.FNPA_QR, np.zeros(d), meta)


def fit_pca(F: FeatureMatrix, r: int | None = None) -> Projection:
    X, y = _features(F)
    n, d = X.shape
    r = _default_r(y, d) if r is None else int(r)
    if not 1 <= r <= d:
        raise DataError(f"r must satisfy 1 <= r <= d = {d}, got {r}")
    center = X.mean(axis=0)
    Xc = X - center
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(-evals, kind="stable")[:r]
    Q = _fix_signs(evecs[:, order])
    return Projection(Q, Method.PCA, center, {"eigenvalues": evals[order].tolist()})


def lda_scatters(X, labels):
    """Crisp Fisher scatters ``(Sw, Sb)`` summed class by class."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    m = X.mean(axis=0)
    d = X.shape[1]
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for c in np.unique(labels):
        Xc = X[labels == c]
        mc = Xc.mean(axis=0)
        D = Xc - mc
        Sw += D.T @ D
        Sb += Xc.shape[0] * np.outer(mc - m, mc - m)
    return Sw, Sb


def fuzzy_scatters(X, U, fuzz_exponent: float = 1.0):
    """Membership-weighted scatters ``(Sw, Sb)``; one-hot ``U`` gives :func:`lda_scatters`."""
    X = np.asarray(X, dtype=float)
    Uw = np.asarray(U, dtype=float) ** fuzz_exponent
    mass = Uw.sum(axis=0)
    Uw, mass = Uw[:, mass > 0], mass[mass > 0]
    means = (Uw.T @ X) / mass[:, None]
    m = X.mean(axis=0)
    d = X.shape[1]
    Sw = np.zeros((d, d))
    for c in range(Uw.shape[1]):
        D = X - means[c]
        Sw += (D * Uw[:, c, None]).T @ D
    Dm = means - m
    Sb = (Dm * mass[:, None]).T @ Dm
    return 0.5 * (Sw + Sw.T), 0.5 * (Sb + Sb.T)


def _discriminant(method, d, Sw, Sb, r, ridge, extra=None) -> Projection:
    dirs = trace_ratio_directions(Sw, Sb, r, ridge)
    meta = {
        "eigenvalues": dirs.eigenvalues.tolist(),
        "residuals": dirs.residuals.tolist(),
        "ridge": dirs.ridge,
        **(extra or {}),
    }
    return Projection(dirs.H, method, np.zeros(d), meta)


def _check_discriminant_r(y, d, r):
    C = np.unique(y).size
    r = _default_r(y, d) if r is None else int(r)
    if not 1 <= r <= C - 1:
        raise DataError(f"r must satisfy 1 <= r <= C-1 = {C - 1}, got {r}")
    return r


def fit_lda(F: FeatureMatrix, r: int | None = None, ridge: float | None = None) -> Projection:
    X, y = _features(F)
    _check_supervised(y)
    r = _check_discriminant_r(y, X.shape[1], r)
    Sw, Sb = lda_scatters(X, y)
    return _discriminant(Method.LDA, X.shape[1], Sw, Sb, r, ridge)


def fit_flda(F: FeatureMatrix, r: int | None = None, k: int | None = None,
             fuzz_exponent: float = 1.0, ridge: float | None = None) -> Projection:
    X, y = _features(F)
    _check_supervised(y)
    r = _check_discriminant_r(y, X.shape[1], r)
    k = default_k(y) if k is None else int(k)
    U = fuzzy_memberships(X, y, k)
    Sw, Sb = fuzzy_scatters(X, U, fuzz_exponent)
    return _discriminant(Method.FLDA, X.shape[1], Sw, Sb, r, ridge,
                         {"k": k, "fuzz_exponent": fuzz_exponent})


def fit_projection(method, F: FeatureMatrix, r=None, k=None, ridge=None,
                   fuzz_exponent: float = 1.0) -> Projection:
    method = Method.parse(method)
    if method is Method.FNPA_QR:
        return fit_fnpa_qr(F, r, k, ridge)
    if method is Method.PCA:
        return fit_pca(F, r)
    if method is Method.LDA:
        return fit_lda(F, r, ridge)
    return fit_flda(F, r, k, fuzz_exponent, ridge)


def project(p: Projection, F: FeatureMatrix) -> FeatureMatrix:
    """Map rows to ``(x - center) @ basis``; labels carried through."""
    if F.n_features != p.d:
        raise DataError(
            f"dimension mismatch: features have {F.n_features} columns, projection expects {p.d}"
        )
    return FeatureMatrix((F.values - p.center) @ p.basis, F.labels, F.descriptor, F.window_length)


def save_projection(p: Projection, path) -> None:
    header = {"method": p.method.value, "d": p.d, "r": p.r, "fit_metadata": p.fit_metadata}
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(BUNDLE_MAGIC + "\n")
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(["center"] + [f"b{j + 1}" for j in range(p.r)]) + "\n")
        for c, row in zip(p.center.tolist(), p.basis.tolist()):
            fh.write(",".join(repr(v) for v in [c] + row) + "\n")


def load_projection(path) -> Projection:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"projection file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 4 or lines[0] != BUNDLE_MAGIC or not lines[1].startswith("# "):
        raise ParseError(f"{path}: not a loadid projection bundle")
    header = json.loads(lines[1][2:])
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[3:] if line])
    if rows.shape != (header["d"], header["r"] + 1):
        raise ParseError(f"{path}: basis shape {rows.shape} disagrees with header")
    return Projection(rows[:, 1:], header["method"], rows[:, 0], header["fit_metadata"])
