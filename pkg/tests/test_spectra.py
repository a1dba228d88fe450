import numpy as np
import pytest
from spectra import (Spectrum, SpectraSet, SpectraParseError, load_spectra, save_spectra,
                     min_max_normalize, normalize_set, get_normalizer, split)

def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)

# ---------- CSV ----------
def test_load_mixed_labels(tmp_path):
    p = write(tmp_path / "s.csv",
              "label,w_0,w_1,w_2,w_3\n"
              "0,1,2,3,4\n"
              "5,0.5,0.25,0,1\n"
              "-1,9,8,7,6\n")
    data = load_spectra(p)
    assert len(data) == 3 and data.dim == 4
    assert [s.label for s in data] == [0, 5, None]
    assert not data[2].is_labeled
    assert data[1].intensities.tolist() == [0.5, 0.25, 0.0, 1.0]
    assert data.wavelengths is None

def test_load_header_only(tmp_path):
    p = write(tmp_path / "s.csv", "label,w_0,w_1,w_2,w_3\n")
    data = load_spectra(p)
    assert len(data) == 0 and data.dim == 4

def test_ragged_row_cites_row_1(tmp_path):
    p = write(tmp_path / "s.csv", "label,w_0,w_1,w_2,w_3\n0,1,2,3\n")
    with pytest.raises(SpectraParseError) as e:
        load_spectra(p)
    assert e.value.row == 1 and e.value.line == 2
    assert "row 1" in str(e.value)

@pytest.mark.parametrize("row", ["12,1,2", "x,1,2", "0,1,abc", "0,1,nan", "-2,1,2"])
def test_bad_rows_rejected(tmp_path, row):
    p = write(tmp_path / "s.csv", "label,w_0,w_1\n0,1,1\n" + row + "\n")
    with pytest.raises(SpectraParseError) as e:
        load_spectra(p)
    assert e.value.row == 2

def test_malformed_header(tmp_path):
    p = write(tmp_path / "s.csv", "class,w_0\n0,1\n")
    with pytest.raises(SpectraParseError):
        load_spectra(p)

def test_numeric_header_kept_as_wavelengths(tmp_path):
    p = write(tmp_path / "s.csv", "label,200.5,201.0,201.5\n1,1,2,3\n")
    data = load_spectra(p)
    assert data.wavelengths.tolist() == [200.5, 201.0, 201.5]

def test_save_then_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 5))
    data = SpectraSet.from_arrays(X, [0, 1, -1, 11, 3, -1])
    path = str(tmp_path / "out.csv")
    save_spectra(data, path)
    back = load_spectra(path)
    assert back.labels().tolist() == [0, 1, -1, 11, 3, -1]
    assert np.array_equal(back.matrix(), X)
    with open(path, "rb") as fh:
        assert b"\r\n" not in fh.read()

def test_set_rejects_label_out_of_range():
    with pytest.raises(ValueError):
        SpectraSet([Spectrum([1.0, 2.0], 12)], dim=2)

def test_set_rejects_mixed_dims():
    with pytest.raises(ValueError):
        SpectraSet([Spectrum([1.0, 2.0]), Spectrum([1.0])], dim=2)

# ---------- Normalization ----------
@pytest.mark.parametrize("raw, expected", [
    ([2, 4, 6], [0, 0.5, 1]),
    ([5, 5, 5], [0, 0, 0]),
    ([-3, 0, 9], [0, 0.25, 1]),
])
def test_min_max_known_values(raw, expected):
    out = min_max_normalize(Spectrum(raw, 4))
    assert out.intensities.tolist() == expected and out.label == 4

def test_min_max_idempotent_and_bounded():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = Spectrum(rng.standard_normal(30) * 10)
        once = min_max_normalize(s)
        twice = min_max_normalize(once)
        assert np.array_equal(once.intensities, twice.intensities)
        assert once.intensities.min() == 0.0 and once.intensities.max() == 1.0

def test_min_max_rejects_non_finite():
    with pytest.raises(ValueError):
        min_max_normalize(Spectrum([1.0, np.inf]))

def test_min_max_wide_range_stays_finite():
    out = min_max_normalize(Spectrum([-1e308, 0.0, 1e308]))
    assert out.intensities.tolist() == [0.0, 0.5, 1.0]
    extreme = min_max_normalize(Spectrum([-np.finfo(float).max, np.finfo(float).max]))
    assert extreme.intensities.tolist() == [0.0, 1.0]

def test_normalize_set_and_registry():
    data = SpectraSet.from_arrays([[1.0, 3.0], [2.0, 2.0]], [0, 1])
    out = normalize_set(data)
    assert out.matrix().tolist() == [[0.0, 1.0], [0.0, 0.0]]
    assert get_normalizer("none")(data) is data
    with pytest.raises(ValueError) as e:
        get_normalizer("zscore")
    assert "Supported" in str(e.value)

# ---------- Splitting ----------
def make_set(n, dim=3):
    return SpectraSet.from_arrays(np.arange(n * dim, dtype=float).reshape(n, dim), [i % 12 for i in range(n)])

def test_split_sizes():
    a, b = split(make_set(10), [0.8, 0.2], seed=7)
    assert (len(a), len(b)) == (8, 2)

def test_split_identity_partition():
    data = make_set(9)
    (only,) = split(data, [1.0], seed=3)
    assert sorted(s.intensities[0] for s in only) == sorted(s.intensities[0] for s in data)

def test_split_deterministic_disjoint_exhaustive():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(1, 40))
        f = rng.dirichlet([1.0, 1.0, 1.0]).tolist()
        seed = int(rng.integers(0, 1000))
        data = make_set(n, dim=1)
        first = split(data, f, seed)
        second = split(data, f, seed)
        keys = [[s.intensities[0] for s in part] for part in first]
        assert keys == [[s.intensities[0] for s in part] for part in second]
        flat = sorted(k for part in keys for k in part)
        assert flat == sorted(s.intensities[0] for s in data)
        for part, frac in zip(first, f):
            assert abs(len(part) - n * frac) < 1

def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split(make_set(4), [1.2, -0.2], seed=0)
    with pytest.raises(ValueError):
        split(make_set(4), [0.5, 0.4], seed=0)
