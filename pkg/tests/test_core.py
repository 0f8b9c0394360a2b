import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engramlab.core import (BIPOLAR, Pattern, PatternSet, Rng, WeightMatrix, derive_seed,
                            hamming_distance, overlap, random_sparse_pattern)
from engramlab.errors import InputError


def P(s, coding="binary"):
    return Pattern.from_string(s, coding)


@pytest.mark.parametrize("a,b,expected", [
    ("101101", "101101", 0),
    ("101101", "010010", 6),
    ("101101", "101011", 2),
])
def test_hamming_distance_examples(a, b, expected):
    assert hamming_distance(P(a), P(b)) == expected


def test_hamming_dimension_mismatch():
    with pytest.raises(InputError):
        hamming_distance(P("101"), P("1010"))


def test_overlap_examples():
    a = Pattern([1, 1, -1, -1], BIPOLAR)
    b = Pattern([1, -1, -1, -1], BIPOLAR)
    assert overlap(a, a) == 1.0
    assert overlap(a, -a) == -1.0
    assert overlap(a, b) == 0.5


def test_overlap_rejects_binary():
    with pytest.raises(InputError):
        overlap(P("1010"), P("1010"))


def test_pattern_alphabet_enforced():
    with pytest.raises(InputError):
        Pattern([0, 2, 1])
    with pytest.raises(InputError):
        Pattern([0, 1], BIPOLAR)


def test_pattern_set_homogeneous():
    with pytest.raises(InputError):
        PatternSet((P("101"), P("1011")))
    ps = PatternSet((P("101"), P("011")))
    assert (ps.M, ps.N) == (2, 3)


@pytest.mark.parametrize("n,a,k", [(100, 0.05, 5), (10, 0.5, 5)])
def test_random_sparse_pattern_cardinality(n, a, k):
    p = random_sparse_pattern(Rng(7), n, a)
    assert p.n == n and int(p.active.sum()) == k


def test_random_sparse_pattern_deterministic():
    assert random_sparse_pattern(Rng(99), 64, 0.1) == random_sparse_pattern(Rng(99), 64, 0.1)


def test_random_sparse_pattern_degenerate_level():
    with pytest.raises(InputError):
        random_sparse_pattern(Rng(0), 10, 0.01)
    with pytest.raises(InputError):
        random_sparse_pattern(Rng(0), 10, 1.0)


def test_random_sparse_pattern_bit_frequency():
    rng = Rng(2024)
    n, a, draws = 20, 0.2, 10_000
    counts = np.zeros(n)
    for _ in range(draws):
        counts += random_sparse_pattern(rng, n, a).bits
    freq = counts / draws
    sigma = np.sqrt(a * (1 - a) / draws)
    assert np.all(np.abs(freq - a) <= 3 * sigma)


def test_rng_split_is_independent_of_parent_state():
    r = Rng(5)
    child_before = r.split(3).generator.integers(0, 1 << 30, 4)
    r.generator.integers(0, 10, 100)
    child_after = r.split(3).generator.integers(0, 1 << 30, 4)
    assert np.array_equal(child_before, child_after)
    assert derive_seed(5, 3) != derive_seed(5, 4)


def test_rng_known_stream():
    # Frozen: guards the documented seed derivation against silent changes.
    assert derive_seed(0, 0) == int.from_bytes(
        __import__("hashlib").sha256(b"0:0").digest()[:8], "little")


def test_weight_matrix_zero_diagonal():
    w = WeightMatrix(np.ones((3, 3)))
    assert np.all(np.diag(w.w) == 0)
    assert WeightMatrix(np.ones((3, 3)), self_coupling=True).w[1, 1] == 1.0


bits = st.lists(st.integers(0, 1), min_size=12, max_size=12)


@settings(max_examples=200)
@given(bits, bits, bits)
def test_hamming_metric_axioms(x, y, z):
    a, b, c = (Pattern(np.array(v)) for v in (x, y, z))
    dab = hamming_distance(a, b)
    assert dab == hamming_distance(b, a)
    assert (dab == 0) == (a == b)
    assert hamming_distance(a, c) <= dab + hamming_distance(b, c)
