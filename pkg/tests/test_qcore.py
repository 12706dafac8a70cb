import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qot import qcore
from qot.qcore import DimensionError, Quaternion

# Basis multiplication table written out from i^2 = j^2 = k^2 = ijk = -1.
# Entry (a, b) -> (sign, c) means e_a * e_b = sign * e_c, with e_0 = 1.
BASIS_TABLE = {
    (0, 0): (1, 0), (0, 1): (1, 1), (0, 2): (1, 2), (0, 3): (1, 3),
    (1, 0): (1, 1), (1, 1): (-1, 0), (1, 2): (1, 3), (1, 3): (-1, 2),
    (2, 0): (1, 2), (2, 1): (-1, 3), (2, 2): (-1, 0), (2, 3): (1, 1),
    (3, 0): (1, 3), (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (-1, 0),
}


def table_product(a, b):
    out = np.zeros(4)
    for (p, q), (s, c) in BASIS_TABLE.items():
        out[c] += s * a[p] * b[q]
    return out


def to_complex(q):
    """q = (r + i I) + (j + k I) J  ->  2x2 complex matrix [[a, b], [-conj b, conj a]]."""
    a = q[..., 0] + 1j * q[..., 1]
    b = q[..., 2] + 1j * q[..., 3]
    return np.stack([np.stack([a, b], -1), np.stack([-b.conj(), a.conj()], -1)], -2)


def complex_block(A):
    """[m, n, 4] quaternion matrix -> [2m, 2n] complex matrix."""
    m, n, _ = A.shape
    return to_complex(A).transpose(0, 2, 1, 3).reshape(2 * m, 2 * n)


finite = st.floats(-10, 10, allow_nan=False, width=64)
quats = arrays(np.float64, (4,), elements=finite)


class TestHamilton:
    def test_identity(self):
        q = np.array([0.3, -1.2, 2.0, 0.7])
        np.testing.assert_array_equal(qcore.hamilton([1.0, 0, 0, 0], q), q)
        np.testing.assert_array_equal(qcore.hamilton(q, [1.0, 0, 0, 0]), q)

    @pytest.mark.parametrize(
        "a, b, sign, c",
        [(1, 2, 1, 3), (2, 1, -1, 3), (2, 3, 1, 1), (3, 2, -1, 1), (3, 1, 1, 2), (1, 3, -1, 2)],
    )
    def test_sign_table(self, a, b, sign, c):
        e = np.eye(4)
        np.testing.assert_array_equal(qcore.hamilton(e[a], e[b]), sign * e[c])

    def test_squares_are_minus_one(self):
        for c in (1, 2, 3):
            e = np.eye(4)[c]
            np.testing.assert_array_equal(qcore.hamilton(e, e), [-1, 0, 0, 0])

    def test_matches_table_and_left_matrix(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 50, 4))
        got = qcore.hamilton(a, b)
        for n in range(50):
            np.testing.assert_allclose(got[n], table_product(a[n], b[n]), atol=1e-12)
            np.testing.assert_allclose(got[n], qcore.left_matrix(a[n]) @ b[n], atol=1e-12)

    def test_broadcasts(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(3, 1, 4))
        b = rng.normal(size=(1, 5, 4))
        out = qcore.hamilton(a, b)
        assert out.shape == (3, 5, 4)
        np.testing.assert_allclose(out[2, 4], table_product(a[2, 0], b[0, 4]), atol=1e-12)

    def test_rejects_wrong_trailing_axis(self):
        with pytest.raises(DimensionError):
            qcore.hamilton(np.zeros(3), np.zeros(4))

    @settings(max_examples=200, deadline=None)
    @given(quats, quats)
    def test_norm_multiplicative(self, a, b):
        lhs = np.linalg.norm(qcore.hamilton(a, b))
        assert lhs == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-10, abs=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(quats, quats, quats)
    def test_associative(self, a, b, c):
        lhs = qcore.hamilton(qcore.hamilton(a, b), c)
        rhs = qcore.hamilton(a, qcore.hamilton(b, c))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-7)

    @settings(max_examples=100, deadline=None)
    @given(quats, quats)
    def test_complex_representation_is_homomorphic(self, a, b):
        np.testing.assert_allclose(
            to_complex(qcore.hamilton(a, b)), to_complex(a) @ to_complex(b), rtol=1e-10, atol=1e-9
        )

    @settings(max_examples=100, deadline=None)
    @given(quats, quats)
    def test_conjugate_reverses_products(self, a, b):
        lhs = qcore.conjugate(qcore.hamilton(a, b))
        rhs = qcore.hamilton(qcore.conjugate(b), qcore.conjugate(a))
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestLeftMatrix:
    def test_identity(self):
        np.testing.assert_array_equal(qcore.left_matrix([1.0, 0, 0, 0]), np.eye(4))

    def test_pure_i(self):
        expected = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
        np.testing.assert_array_equal(qcore.left_matrix([0.0, 1, 0, 0]), expected)

    def test_layout(self):
        r, i, j, k = 1.0, 2.0, 3.0, 4.0
        expected = [[r, -i, -j, -k], [i, r, -k, j], [j, k, r, -i], [k, -j, i, r]]
        np.testing.assert_array_equal(qcore.left_matrix([r, i, j, k]), expected)

    def test_unit_quaternion_is_orthogonal(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q = rng.normal(size=4)
            M = qcore.left_matrix(q / np.linalg.norm(q))
            np.testing.assert_allclose(M.T @ M, np.eye(4), atol=1e-10)

    def test_batched(self):
        q = np.random.default_rng(3).normal(size=(2, 3, 4))
        M = qcore.left_matrix(q)
        assert M.shape == (2, 3, 4, 4)
        np.testing.assert_array_equal(M[1, 2], qcore.left_matrix(q[1, 2]))


class TestQuatMatmul:
    def test_identity_matrix(self):
        B = np.random.default_rng(4).normal(size=(3, 2, 4))
        I = np.zeros((3, 3, 4))
        I[np.arange(3), np.arange(3), 0] = 1
        np.testing.assert_allclose(qcore.quat_matmul(I, B), B, atol=1e-15)

    def test_one_by_one_is_hamilton(self):
        a, b = np.random.default_rng(5).normal(size=(2, 4))
        np.testing.assert_allclose(qcore.quat_matmul(a[None, None], b[None, None])[0, 0], qcore.hamilton(a, b))

    def test_block_matrix_oracle(self):
        rng = np.random.default_rng(6)
        A, B = rng.normal(size=(3, 2, 4)), rng.normal(size=(2, 4, 4))
        C = qcore.quat_matmul(A, B)
        np.testing.assert_allclose(qcore.block_matrix(C), qcore.block_matrix(A) @ qcore.block_matrix(B), atol=1e-10)

    def test_complex_oracle(self):
        rng = np.random.default_rng(7)
        A, B = rng.normal(size=(4, 3, 4)), rng.normal(size=(3, 5, 4))
        C = qcore.quat_matmul(A, B)
        np.testing.assert_allclose(complex_block(C), complex_block(A) @ complex_block(B), atol=1e-10)

    def test_conjugate_right(self):
        rng = np.random.default_rng(8)
        A, B = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 2, 4))
        np.testing.assert_allclose(
            qcore.quat_matmul(A, B, conjugate_right=True), qcore.quat_matmul(A, qcore.conjugate(B)), atol=1e-14
        )

    def test_inner_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            qcore.quat_matmul(np.zeros((2, 3, 4)), np.zeros((2, 2, 4)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_block_oracle_random_shapes(self, m, n, p, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.normal(size=(m, n, 4)), rng.normal(size=(n, p, 4))
        np.testing.assert_allclose(
            qcore.block_matrix(qcore.quat_matmul(A, B)),
            qcore.block_matrix(A) @ qcore.block_matrix(B),
            atol=1e-10,
        )


class TestHelpers:
    def test_conjugate(self):
        np.testing.assert_array_equal(qcore.conjugate([1.0, 2, 3, 4]), [1, -2, -3, -4])

    def test_component_map_identity(self):
        q = np.random.default_rng(9).normal(size=(3, 4))
        np.testing.assert_array_equal(qcore.component_map(lambda c: c, q), q)

    def test_component_map_applies_per_component(self):
        q = np.arange(8.0).reshape(2, 4)
        out = qcore.component_map(lambda c: c * 2, q)
        np.testing.assert_array_equal(out, q * 2)

    def test_add_sub_inverse(self):
        rng = np.random.default_rng(10)
        a, b = rng.normal(size=(2, 5, 3, 4))
        np.testing.assert_allclose(qcore.sub(qcore.add(a, b), b), a, atol=1e-12)

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            qcore.add(np.zeros((2, 4)), np.zeros((3, 4)))

    def test_components_roundtrip(self):
        q = np.random.default_rng(11).normal(size=(2, 2, 4))
        np.testing.assert_array_equal(qcore.from_components(*qcore.components(q)), q)

    def test_reshape_keeps_component_axis(self):
        q = np.arange(24.0).reshape(2, 3, 4)
        out = qcore.reshape(q, (6,))
        assert out.shape == (6, 4)
        np.testing.assert_array_equal(out[4], q[1, 1])

    def test_concat_split(self):
        rng = np.random.default_rng(12)
        parts = [rng.normal(size=(n, 2, 4)) for n in (1, 3)]
        joined = qcore.concat(parts, axis=0)
        for got, want in zip(qcore.split(joined, [1], axis=0), parts):
            np.testing.assert_array_equal(got, want)

    def test_transpose_logical_axes(self):
        q = np.random.default_rng(13).normal(size=(2, 3, 4))
        t = qcore.quat_transpose(q)
        assert t.shape == (3, 2, 4)
        np.testing.assert_array_equal(t[2, 1], q[1, 2])

    def test_norm(self):
        assert qcore.norm([1.0, 2, 2, 4]) == pytest.approx(5.0)


class TestQuaternionScalar:
    def test_product_matches_array_form(self):
        a, b = Quaternion(1, 2, 3, 4), Quaternion(-1, 0.5, 2, 0)
        np.testing.assert_allclose((a * b).as_array(), qcore.hamilton(a.as_array(), b.as_array()))

    def test_ij_equals_k(self):
        assert Quaternion(0, 1, 0, 0) * Quaternion(0, 0, 1, 0) == Quaternion(0, 0, 0, 1)
        assert Quaternion(0, 0, 1, 0) * Quaternion(0, 1, 0, 0) == Quaternion(0, 0, 0, -1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Quaternion(float("nan"), 0, 0, 0)

    def test_conjugate_and_norm(self):
        q = Quaternion(1, 2, 3, 4)
        assert q.conjugate() == Quaternion(1, -2, -3, -4)
        assert (q * q.conjugate()).r == pytest.approx(q.norm() ** 2)
