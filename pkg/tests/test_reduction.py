import numpy as np
import pytest

from helpers import gaussian_blobs
from loadid.errors import DataError, NumericalError
from loadid.features import FeatureMatrix
from loadid.reduction import (
    Method,
    Projection,
    fit_flda,
    fit_fnpa_qr,
    fit_lda,
    fit_pca,
    fit_projection,
    fuzzy_scatters,
    lda_scatters,
    load_projection,
    project,
    qr_orthogonalize,
    save_projection,
    trace_ratio_directions,
)
from loadid.scatter import fuzzy_memberships


def _F(X, y):
    return FeatureMatrix(np.asarray(X, float), np.asarray(y, int))


def test_directions_diagonal():
    dirs = trace_ratio_directions(np.eye(3), np.diag([3.0, 2.0, 1.0]), 1, ridge=0.0)
    assert np.allclose(np.abs(dirs.H[:, 0]), [1, 0, 0])
    assert dirs.eigenvalues[0] == pytest.approx(3.0)


def test_directions_scaled_within():
    dirs = trace_ratio_directions(2 * np.eye(3), np.diag([3.0, 2.0, 1.0]), 2, ridge=0.0)
    assert np.allclose(np.abs(dirs.H), [[1, 0], [0, 1], [0, 0]])
    assert np.allclose(dirs.eigenvalues, [1.5, 1.0])


def test_directions_sign_convention(rng):
    A = rng.standard_normal((5, 5))
    B = rng.standard_normal((5, 3))
    dirs = trace_ratio_directions(A @ A.T + np.eye(5), B @ B.T, 3)
    for col in dirs.H.T:
        assert col[np.argmax(np.abs(col))] > 0
    assert np.allclose(np.linalg.norm(dirs.H, axis=0), 1.0)
    assert np.all(np.diff(dirs.eigenvalues) <= 0)


def test_directions_degenerate_between():
    with pytest.raises(NumericalError, match="degenerate between-class scatter"):
        trace_ratio_directions(np.eye(2), np.zeros((2, 2)), 1)


def test_directions_r_out_of_range():
    with pytest.raises(DataError):
        trace_ratio_directions(np.eye(2), np.eye(2), 3)


def test_directions_singular_within_without_ridge():
    with pytest.raises(NumericalError):
        trace_ratio_directions(np.diag([1.0, 0.0]), np.eye(2), 1, ridge=0.0)


def test_qr_of_orthonormal_random_basis(rng):
    H, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    Q, R = qr_orthogonalize(H)
    # R is diagonal +-1 and the sign convention makes it the identity up to column signs of H
    assert np.allclose(np.abs(R), np.eye(3), atol=1e-12)
    assert np.allclose(Q @ R, H, atol=1e-12)


def test_qr_orthonormal_columns_positive_diag():
    H = np.eye(4)[:, :2]
    Q, R = qr_orthogonalize(H)
    assert np.array_equal(Q, H)
    assert np.allclose(R, np.eye(2))


def test_qr_scaled_axes():
    Q, R = qr_orthogonalize(np.diag([2.0, 3.0]))
    assert np.allclose(Q, np.eye(2))
    assert np.allclose(R, np.diag([2.0, 3.0]))


def test_qr_random_reconstruction(rng):
    H = rng.standard_normal((6, 3))
    Q, R = qr_orthogonalize(H)
    assert np.abs(Q.T @ Q - np.eye(3)).max() <= 1e-10
    assert np.abs(Q @ R - H).max() <= 1e-10
    assert np.all(np.diag(R) >= 0)
    assert np.allclose(np.triu(R), R)


def test_qr_rank_deficient():
    H = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(NumericalError, match="1 of 2"):
        qr_orthogonalize(H)


def test_fnpa_two_gaussians_separate(rng):
    X, y = gaussian_blobs(rng, [[0, 0], [6, 2]], 40)
    p = fit_fnpa_qr(_F(X, y), r=1)
    z = project(p, _F(X, y)).values[:, 0]
    gap = abs(z[y == 0].mean() - z[y == 1].mean())
    sd = max(z[y == 0].std(), z[y == 1].std())
    assert gap > 4 * sd


def test_fnpa_full_rank_is_isometry(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0], [2, 1, 0]], 15)
    p = fit_fnpa_qr(_F(X, y), r=3, ridge=1e-3)
    assert p.basis.shape == (3, 3)
    assert np.allclose(p.basis.T @ p.basis, np.eye(3), atol=1e-10)
    Z = project(p, _F(X, y)).values
    assert np.allclose(np.linalg.norm(Z, axis=1), np.linalg.norm(X, axis=1))


def test_fnpa_collinear_means_second_eigenvalue_zero(rng):
    means = np.array([[0, 0, 0], [2, 2, 0], [4, 4, 0]], float)
    X, y = gaussian_blobs(rng, means, 20)
    for c in range(3):  # make the sample means exactly collinear
        X[y == c] += means[c] - X[y == c].mean(axis=0)
    p = fit_fnpa_qr(_F(X, y), r=2)
    lam = p.fit_metadata["eigenvalues"]
    assert lam[1] <= 1e-8 * lam[0]


def test_fnpa_metadata(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0], [3, 0, 0], [0, 3, 0]], 10)
    p = fit_fnpa_qr(_F(X, y))
    assert p.method is Method.FNPA_QR
    assert p.r == 2
    assert max(p.fit_metadata["residuals"]) <= 1e-6
    assert not p.center.any()


def test_pca_line():
    t = np.linspace(-3, 3, 25)
    X = np.column_stack([t, 2 * t])
    p = fit_pca(_F(X, np.zeros(25)), r=1)
    assert np.allclose(p.basis[:, 0], np.array([1, 2]) / np.sqrt(5))


def test_pca_full_rank_reconstruction(rng):
    X = rng.standard_normal((20, 4)) @ rng.standard_normal((4, 4))
    F = _F(X, np.zeros(20))
    p = fit_pca(F, r=4)
    Z = project(p, F).values
    assert np.allclose(Z @ p.basis.T, X - X.mean(axis=0), atol=1e-8)
    assert np.abs(p.basis.T @ p.basis - np.eye(4)).max() <= 1e-8


def test_pca_isotropic_orthonormal(rng):
    X = rng.standard_normal((2000, 3))
    p = fit_pca(_F(X, np.zeros(2000)), r=3)
    lam = np.array(p.fit_metadata["eigenvalues"])
    assert np.allclose(lam, 1.0, atol=0.15)
    assert np.abs(p.basis.T @ p.basis - np.eye(3)).max() <= 1e-8


def test_pca_r_too_large():
    with pytest.raises(DataError):
        fit_pca(_F(np.zeros((4, 2)), np.zeros(4)), r=3)


def _fisher(w, Sw, Sb):
    return (w @ Sb @ w) / (w @ Sw @ w)


def test_lda_beats_direction_sweep(rng):
    X, y = gaussian_blobs(rng, [[0, 0], [2, 1]], 30)
    X[:, 1] *= 3
    p = fit_lda(_F(X, y), r=1, ridge=0.0)
    Sw, Sb = lda_scatters(X, y)
    best = _fisher(p.basis[:, 0], Sw, Sb)
    sweep = [_fisher(np.array([np.cos(a), np.sin(a)]), Sw, Sb)
             for a in np.deg2rad(np.arange(360))]
    assert best >= max(sweep) - 1e-9
    assert best >= _fisher(np.array([1.0, 0]), Sw, Sb)
    assert best >= _fisher(np.array([0, 1.0]), Sw, Sb)


def test_lda_identical_means():
    X = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    with pytest.raises(NumericalError, match="degenerate"):
        fit_lda(_F(X, [0, 0, 1, 1]))


def test_lda_r_bound(rng):
    X, y = gaussian_blobs(rng, [[0, 0], [2, 1]], 5)
    with pytest.raises(DataError):
        fit_lda(_F(X, y), r=2)


def test_lda_label_permutation_keeps_span(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0], [3, 1, 0], [0, 2, 2]], 15)
    a = fit_lda(_F(X, y), r=2).basis
    b = fit_lda(_F(X, np.array([2, 0, 1])[y]), r=2).basis
    Pa = a @ np.linalg.pinv(a)
    Pb = b @ np.linalg.pinv(b)
    assert np.allclose(Pa, Pb, atol=1e-8)


def test_flda_one_hot_equals_lda(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 1], [2, 1, 0], [1, 3, 1]], 9)
    U = np.eye(3)[y]
    Sw_f, Sb_f = fuzzy_scatters(X, U)
    Sw, Sb = lda_scatters(X, y)
    assert np.allclose(Sw_f, Sw, atol=1e-10)
    assert np.allclose(Sb_f, Sb, atol=1e-10)


def _separation(p, X, y):
    z = project(p, _F(X, y)).values[:, 0]
    return abs(z[y == 0].mean() - z[y == 1].mean()) / np.sqrt(
        0.5 * (z[y == 0].var() + z[y == 1].var()))


def test_flda_close_to_lda_when_separated(rng):
    X, y = gaussian_blobs(rng, [[0, 0], [8, 3]], 40)
    s_lda = _separation(fit_lda(_F(X, y)), X, y)
    s_flda = _separation(fit_flda(_F(X, y)), X, y)
    assert abs(s_flda - s_lda) <= 0.05 * s_lda


def _outlier_case(seed):
    X, y = gaussian_blobs(np.random.default_rng(seed), [[0, 0], [10, 0]], 25, scale=0.5)
    outlier = np.flatnonzero(y == 1)[0]
    y_bad = y.copy()
    y_bad[outlier] = 0  # sits inside class 1, labeled 0
    return X, y, y_bad, outlier


def test_flda_outlier_gets_low_membership_and_small_own_term():
    X, y, y_bad, o = _outlier_case(0)
    U = fuzzy_memberships(X, y_bad, 7)
    assert U[o, 0] < 0.6
    m0_fuzzy = U[:, 0] @ X / U[:, 0].sum()
    m0_crisp = X[y_bad == 0].mean(axis=0)
    own_fuzzy = U[o, 0] * np.sum((X[o] - m0_fuzzy) ** 2)
    own_crisp = np.sum((X[o] - m0_crisp) ** 2)
    assert own_fuzzy < 0.6 * own_crisp


@pytest.mark.parametrize("seed", range(10))
def test_flda_outlier_perturbs_within_less(seed):
    X, y, y_bad, _ = _outlier_case(seed)
    fuzzy = [np.trace(fuzzy_scatters(X, fuzzy_memberships(X, labels, 7), 2.0)[0])
             for labels in (y, y_bad)]
    crisp = [np.trace(lda_scatters(X, labels)[0]) for labels in (y, y_bad)]
    assert fuzzy[1] - fuzzy[0] < crisp[1] - crisp[0]


def test_project_identity():
    X = np.arange(6.0).reshape(3, 2)
    F = _F(X, [0, 1, 0])
    p = Projection(np.eye(2), Method.PCA, np.zeros(2))
    assert np.array_equal(project(p, F).values, X)


def test_project_contracts_distances(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0, 0], [2, 1, 0, 3]], 10)
    p = fit_fnpa_qr(_F(X, y), r=2)
    Z = project(p, _F(X, y)).values
    for i in range(len(X)):
        dz = np.linalg.norm(Z - Z[i], axis=1)
        dx = np.linalg.norm(X - X[i], axis=1)
        assert np.all(dz <= dx + 1e-9)


def test_project_cluster_order(rng):
    X, y = gaussian_blobs(rng, [[0, 0], [5, 5]], 20)
    p = fit_fnpa_qr(_F(X, y), r=1)
    z = project(p, _F(X, y)).values[:, 0]
    m0, m1 = z[y == 0].mean(), z[y == 1].mean()
    axis_means = (X[y == 0].mean(axis=0) @ p.basis[:, 0], X[y == 1].mean(axis=0) @ p.basis[:, 0])
    assert (m0 < m1) == (axis_means[0] < axis_means[1])


def test_project_dimension_mismatch():
    p = Projection(np.eye(3)[:, :1], Method.PCA, np.zeros(3))
    with pytest.raises(DataError, match="3"):
        project(p, _F(np.zeros((2, 2)), [0, 1]))


@pytest.mark.parametrize("method", ["fnpa-qr", "pca", "lda", "flda"])
def test_projection_bundle_roundtrip(method, tmp_path, rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0], [2, 1, 0], [0, 2, 2]], 12)
    p = fit_projection(method, _F(X, y))
    save_projection(p, tmp_path / "p.csv")
    q = load_projection(tmp_path / "p.csv")
    assert q.method is p.method
    assert np.array_equal(q.basis, p.basis)
    assert np.array_equal(q.center, p.center)
    assert q.fit_metadata == p.fit_metadata


def test_fit_is_deterministic(rng):
    X, y = gaussian_blobs(rng, [[0, 0, 0], [2, 1, 0], [0, 2, 2]], 12)
    for method in ["fnpa-qr", "pca", "lda", "flda"]:
        a = fit_projection(method, _F(X, y))
        b = fit_projection(method, _F(X, y))
        assert np.array_equal(a.basis, b.basis)


def test_method_parse():
    assert Method.parse("FNPA_QR") is Method.FNPA_QR
    with pytest.raises(DataError):
        Method.parse("lfda")
