import numpy as np
import pytest
from spectra import Spectrum, SpectraSet
from dimred import (PcaModel, ConvergenceError, fit_pca, transform, explained_variance,
                    reconstruction_error, default_k, registry, make_strategy, PcaStrategy)

def as_set(X, labels=None):
    return SpectraSet.from_arrays(np.asarray(X, dtype=float), labels)

@pytest.fixture()
def random8():
    rng = np.random.default_rng(11)
    # anisotropic so the top eigenvalues are well separated
    return as_set(rng.standard_normal((50, 8)) * np.array([5.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.25]))

def test_line_y_equals_x():
    m = fit_pca(as_set([[1, 1], [2, 2], [3, 3]]), k=1)
    c = m.components[0]
    assert np.allclose(c, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-8)

def test_matches_dense_eigensolver(random8):
    m = fit_pca(random8, k=3)
    X = random8.matrix()
    C = np.cov(X, rowvar=False)
    w, V = np.linalg.eigh(C)
    oracle = V[:, ::-1][:, :3].T
    for got, want in zip(m.components, oracle):
        assert min(np.abs(got - want).max(), np.abs(got + want).max()) < 1e-6

def test_components_orthonormal_and_sign_fixed(random8):
    m = fit_pca(random8, k=5)
    G = m.components @ m.components.T
    assert np.abs(G - np.eye(5)).max() < 1e-8
    for row in m.components:
        assert row[np.argmax(np.abs(row))] > 0

def test_full_rank_reconstruction(random8):
    m = fit_pca(random8, k=8 - 1)
    small = as_set(random8.matrix()[:9, :4])
    full = fit_pca(small, k=4)
    X = small.matrix()
    R = full.reconstruct(full.transform_matrix(X))
    assert np.abs(R - X).max() < 1e-8
    assert m.k == 7

def test_wide_data_uses_gram_route():
    rng = np.random.default_rng(2)
    data = as_set(rng.standard_normal((10, 40)))
    m = fit_pca(data, k=5)
    G = m.components @ m.components.T
    assert np.abs(G - np.eye(5)).max() < 1e-8
    C = np.cov(data.matrix(), rowvar=False)
    w = np.linalg.eigvalsh(C)[::-1][:5]
    assert np.allclose(explained_variance(m, data), w, rtol=1e-6)

def test_rank_deficient_data_still_orthonormal():
    X = np.zeros((6, 5))
    X[:, 0] = np.arange(6)
    m = fit_pca(as_set(X), k=3)
    assert np.abs(m.components @ m.components.T - np.eye(3)).max() < 1e-8
    assert np.allclose(np.abs(m.components[0]), [1, 0, 0, 0, 0], atol=1e-8)

def test_k_out_of_range():
    data = as_set(np.eye(4))
    with pytest.raises(ValueError):
        fit_pca(data, k=0)
    with pytest.raises(ValueError):
        fit_pca(data, k=4)

def test_convergence_error_carries_residual(random8):
    with pytest.raises(ConvergenceError) as e:
        fit_pca(random8, k=3, max_iter=1, tol=1e-30)
    assert e.value.iterations == 1 and e.value.residual > 0

def test_deterministic(random8):
    a = fit_pca(random8, k=3, seed=4)
    b = fit_pca(random8, k=3, seed=4)
    assert a.components.tobytes() == b.components.tobytes()
    assert a.mean.tobytes() == b.mean.tobytes()

# ---------- transform ----------
def test_transform_of_mean_is_zero(random8):
    m = fit_pca(random8, k=3)
    out = transform(m, Spectrum(m.mean, 2))
    assert np.abs(out.intensities).max() < 1e-12 and out.label == 2

def test_transform_coordinate_projection():
    m = PcaModel(mean=[1.0, 2.0, 3.0], components=[[1.0, 0.0, 0.0]])
    assert transform(m, Spectrum([5.0, 0.0, 0.0])).intensities.tolist() == [4.0]

def test_transform_matches_matrix_oracle_and_is_affine(random8):
    m = fit_pca(random8, k=4)
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal(8), rng.standard_normal(8)
    ta = transform(m, Spectrum(a)).intensities
    tb = transform(m, Spectrum(b)).intensities
    assert np.abs(ta - m.components @ (a - m.mean)).max() < 1e-12
    assert np.abs((ta - tb) - m.components @ (a - b)).max() < 1e-10

def test_transform_dimension_mismatch(random8):
    m = fit_pca(random8, k=2)
    with pytest.raises(ValueError):
        transform(m, Spectrum(np.zeros(3)))

def test_transform_set_carries_labels(random8):
    labeled = SpectraSet.from_arrays(random8.matrix(), [i % 12 for i in range(50)])
    m = fit_pca(labeled, k=3)
    reduced = m.transform_set(labeled)
    assert reduced.dim == 3 and reduced.labels().tolist() == labeled.labels().tolist()

# ---------- explained variance / reconstruction ----------
def test_explained_variance_on_line():
    data = as_set([[1, 1], [2, 2], [3, 3]])
    m = fit_pca(data, k=1)
    # projections are -sqrt(2), 0, sqrt(2)
    assert explained_variance(m, data)[0] == pytest.approx(2.0, abs=1e-10)

def test_explained_variance_isotropic():
    rng = np.random.default_rng(0)
    data = as_set(rng.standard_normal((10000, 2)))
    v = explained_variance(fit_pca(data, k=1 + 1), data)
    assert v[0] >= v[1] and abs(v[0] - v[1]) / v[0] < 0.2

def test_explained_variance_constant_and_empty():
    m = PcaModel(mean=[0.0, 0.0], components=[[1.0, 0.0], [0.0, 1.0]])
    assert explained_variance(m, as_set([[3, 3]] * 4)) == [0.0, 0.0]
    with pytest.raises(ValueError):
        explained_variance(m, SpectraSet([], dim=2))

def test_reconstruction_error_nonincreasing_in_k(random8):
    errors = [reconstruction_error(fit_pca(random8, k=k), random8) for k in range(1, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))

# ---------- strategies ----------
def test_default_k_rule():
    assert default_k(5000, 40002) == 100
    assert default_k(2000, 1024) == 100
    assert default_k(2000, 64) == 32
    assert default_k(10, 64) == 9
    assert default_k(80, 1024) == 79
    assert default_k(2, 40002) == 1


def test_registry_lookup():
    assert registry.names() == ["pca"]
    assert isinstance(registry.get("pca"), PcaStrategy)
    with pytest.raises(ValueError) as e:
        registry.get("umap")
    assert "Supported: pca" in str(e.value)

def test_make_strategy_configures_copy(random8):
    s = make_strategy("pca", seed=3, tol=1e-9)
    assert s is not registry.get("pca") and s.seed == 3 and s.tol == 1e-9
    assert s.fit(random8, 2).k == 2
