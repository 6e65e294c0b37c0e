import numpy as np
import pytest

from parhawkes import (
    ScanElement,
    ScanElements,
    apply_prefix,
    combine,
    identity_element,
    scan_parallel,
    scan_sequential,
)
from parhawkes.core import DimensionMismatch, EmptyInput
from parhawkes.scan import fold_states_arrays, scan_states_arrays


def dense_matrix(e: ScanElement) -> np.ndarray:
    """The (M+1)x(M+1) block matrix an element stands for (test oracle)."""
    m = e.dim
    out = np.zeros((m + 1, m + 1))
    out[:m, :m] = e.s * np.eye(m)
    out[:m, m] = e.v
    out[m, m] = 1.0
    return out


def from_dense(mat: np.ndarray) -> ScanElement:
    m = mat.shape[0] - 1
    return ScanElement(mat[0, 0], mat[:m, m].copy())


def random_element(rng, m) -> ScanElement:
    return ScanElement(rng.uniform(0.3, 1.0), rng.uniform(0.0, 1.0, m))


class TestCombine:
    def test_right_identity(self, rng):
        e = random_element(rng, 3)
        out = combine(e, identity_element(3))
        assert out.s == e.s and np.array_equal(out.v, e.v)

    def test_left_identity(self, rng):
        e = random_element(rng, 3)
        out = combine(identity_element(3), e)
        assert out.s == e.s and np.array_equal(out.v, e.v)

    def test_worked_example(self):
        # matches multiplying the dense augmented matrices and re-reading blocks
        later = ScanElement(0.5, [1.0, 2.0])
        earlier = ScanElement(2.0, [3.0, 4.0])
        out = combine(later, earlier)
        assert out.s == pytest.approx(1.0)
        assert out.v == pytest.approx([2.5, 4.0])
        oracle = from_dense(dense_matrix(later) @ dense_matrix(earlier))
        assert out.s == pytest.approx(oracle.s, rel=1e-15)
        assert out.v == pytest.approx(oracle.v, rel=1e-15)

    def test_not_commutative(self):
        a = ScanElement(0.5, [1.0])
        b = ScanElement(0.9, [2.0])
        ab = combine(a, b)
        ba = combine(b, a)
        assert not np.allclose(ab.v, ba.v)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            combine(ScanElement(0.5, [1.0]), ScanElement(0.5, [1.0, 2.0]))

    def test_associativity(self, rng):
        for _ in range(200):
            m = rng.integers(1, 9)
            a, b, c = (random_element(rng, m) for _ in range(3))
            left = combine(combine(a, b), c)
            right = combine(a, combine(b, c))
            np.testing.assert_allclose(left.s, right.s, rtol=1e-12)
            np.testing.assert_allclose(left.v, right.v, rtol=1e-12, atol=1e-15)

    def test_compressed_equals_dense_products(self, rng):
        for _ in range(30):
            m = rng.integers(1, 7)
            chain = [random_element(rng, m) for _ in range(rng.integers(2, 10))]
            compressed = chain[0]
            dense = dense_matrix(chain[0])
            for e in chain[1:]:
                compressed = combine(e, compressed)  # later element on the left
                dense = dense_matrix(e) @ dense
            oracle = from_dense(dense)
            np.testing.assert_allclose(compressed.s, oracle.s, rtol=1e-12)
            np.testing.assert_allclose(compressed.v, oracle.v, rtol=1e-12, atol=1e-14)

    def test_result_storage_is_linear_in_m(self, rng):
        # the compressed representation never holds an MxM block
        m = 32
        out = combine(random_element(rng, m), random_element(rng, m))
        assert out.v.shape == (m,)
        assert out.v.nbytes == m * 8
        seq = ScanElements.from_elements([random_element(rng, m) for _ in range(10)])
        assert seq.v.shape == (10, m)


class TestApplyPrefix:
    def test_zero_init_returns_v(self, rng):
        e = random_element(rng, 4)
        assert np.array_equal(apply_prefix(e, np.zeros(4)), e.v)

    def test_identity_prefix_returns_init(self, rng):
        x = rng.uniform(0, 1, 5)
        assert np.array_equal(apply_prefix(identity_element(5), x), x)

    def test_worked_example(self):
        out = apply_prefix(ScanElement(0.5, [1.0, 1.0]), [2.0, 4.0])
        assert out == pytest.approx([2.0, 3.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            apply_prefix(ScanElement(0.5, [1.0]), [1.0, 2.0])


class TestScanSequential:
    def test_single_element(self, rng):
        e = random_element(rng, 2)
        out = scan_sequential([e])
        assert len(out) == 1
        assert out[0].s == e.s and np.array_equal(out[0].v, e.v)

    def test_identities(self):
        out = scan_sequential([identity_element(2), identity_element(2)])
        for i in range(2):
            assert out[i].s == 1.0 and np.all(out[i].v == 0.0)

    def test_hand_unrolled(self):
        els = [ScanElement(0.5, [1.0])] * 3
        out = scan_sequential(els)
        assert out.s == pytest.approx([0.5, 0.25, 0.125])
        assert out.v[:, 0] == pytest.approx([1.0, 1.5, 1.75])

    def test_inclusive_convention(self, rng):
        els = [random_element(rng, 3) for _ in range(5)]
        out = scan_sequential(els)
        assert out[0].s == els[0].s and np.array_equal(out[0].v, els[0].v)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            scan_sequential([])


class TestScanParallel:
    def test_matches_sequential_non_power_of_two(self, rng):
        els = ScanElements.from_elements([random_element(rng, 2) for _ in range(3)])
        ref = scan_sequential(els)
        par = scan_parallel(els)
        np.testing.assert_allclose(par.s, ref.s, rtol=1e-12)
        np.testing.assert_allclose(par.v, ref.v, rtol=1e-12, atol=1e-15)
        assert len(par) == 3  # padding stripped

    def test_randomized_oracle_large(self, rng):
        n, m = 10_000, 4
        els = ScanElements(rng.uniform(0.5, 1.0, n), rng.uniform(0.0, 1.0, (n, m)))
        ref = scan_sequential(els)
        par = scan_parallel(els, workers=2)
        # long products of s in (0.5, 1) underflow to zero; below 1e-300 the
        # decay factor is physically zero and both engines agree on that
        np.testing.assert_allclose(par.s, ref.s, rtol=1e-10, atol=1e-300)
        np.testing.assert_allclose(par.v, ref.v, rtol=1e-10, atol=1e-30)

    @pytest.mark.parametrize("n,m", [(1, 1), (2, 3), (17, 5), (256, 1), (1000, 64), (65536, 3)])
    def test_oracle_equivalence_shapes(self, rng, n, m):
        els = ScanElements(rng.uniform(0.4, 1.0, n), rng.uniform(0.0, 1.0, (n, m)))
        ref = scan_sequential(els)
        par = scan_parallel(els)
        np.testing.assert_allclose(par.s, ref.s, rtol=1e-10, atol=1e-300)
        np.testing.assert_allclose(par.v, ref.v, rtol=1e-10, atol=1e-30)

    def test_bitwise_determinism_across_workers(self, rng):
        n, m = 4097, 6
        els = ScanElements(rng.uniform(0.5, 1.0, n), rng.uniform(0.0, 1.0, (n, m)))
        base = scan_parallel(els, workers=1)
        for w in (2, 4, 8):
            out = scan_parallel(els, workers=w)
            assert np.array_equal(out.s, base.s)
            assert np.array_equal(out.v, base.v)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            scan_parallel([])


class TestArrayEngines:
    def test_fused_states_match_fold_with_init(self, rng):
        B, n, m = 3, 513, 4
        s = rng.uniform(0.5, 1.0, (B, n))
        v = rng.uniform(0.0, 1.0, (B, n, m))
        init = rng.uniform(0.0, 2.0, (B, m))
        ref = fold_states_arrays(s, v, init)
        par = scan_states_arrays(s, v, init)
        np.testing.assert_allclose(np.asarray(par), ref, rtol=1e-10, atol=1e-30)

    def test_fold_is_the_recurrence(self, rng):
        n, m = 50, 3
        s = rng.uniform(0.5, 1.0, (1, n))
        v = rng.uniform(0.0, 1.0, (1, n, m))
        init = rng.uniform(0.0, 1.0, (1, m))
        out = fold_states_arrays(s, v, init)
        state = init[0].copy()
        for i in range(n):
            state = s[0, i] * state + v[0, i]
            np.testing.assert_allclose(out[0, i], state, rtol=1e-15)
