import math

import numba
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_ternary_reference, gaussian_moments_by_quad
from trf import bits, opcount
from trf.data import Dataset, RejectedInput
from trf.moments import (
    ReLU,
    RFFPair,
    Identity,
    Sign,
    Sin,
    Step,
    Ternary,
    moments_closed_form,
    moments_ternary_closed,
)
from trf.ternary import (
    CalibrationError,
    PackedTernaryMatrix,
    Thresholds,
    TernaryWeightSpec,
    dense_transform,
    cross_gram,
    feature_bits,
    gram,
    sample_ternary_weights,
    solve_thresholds,
    ternary_transform,
)

# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


def test_sign_target_gives_zero_thresholds():
    thr = solve_thresholds(2 / math.pi, 0.0, 1.0)
    assert (thr.s_minus, thr.s_plus) == (0.0, 0.0)
    assert thr.success


def test_sin_target_is_symmetric():
    thr = solve_thresholds(math.exp(-1), 0.0, 1.0)
    assert thr.s_minus == pytest.approx(-thr.s_plus, abs=1e-12)
    assert thr.s_plus == pytest.approx(0.7405, abs=1e-4)
    d = gaussian_moments_by_quad(thr.activation(), 1.0, (thr.s_minus, thr.s_plus))
    assert d[1] == pytest.approx(math.exp(-1), rel=1e-9)


def test_relu_target_round_trip():
    thr = solve_thresholds(0.25, 1 / (8 * math.pi), 1.0)
    d = moments_ternary_closed(thr.s_minus, thr.s_plus, 1.0)
    assert d.d1 == pytest.approx(0.25, abs=1e-8)
    assert d.d2 == pytest.approx(0.039789, abs=1e-6)
    q = gaussian_moments_by_quad(thr.activation(), 1.0, (thr.s_minus, thr.s_plus))
    np.testing.assert_allclose(q[1:], (0.25, 1 / (8 * math.pi)), rtol=1e-8)


FEASIBLE = [(ReLU(), 0.5), (ReLU(), 1.0), (Sin(), 0.5), (Sin(), 1.0), (Sin(), 2.0),
            (Step(), 0.5), (Step(), 1.0), (Step(), 2.0), (Sign(), 2.0), (RFFPair(), 0.5),
            (Identity(), 0.5), (Ternary(-0.5, 1.0), 2.0)]


@pytest.mark.parametrize("kind,tau", FEASIBLE, ids=lambda x: getattr(type(x), "__name__", str(x)))
def test_calibration_round_trip(kind, tau):
    d = moments_closed_form(kind, tau)
    thr = solve_thresholds(d.d1, d.d2, tau)
    got = moments_ternary_closed(thr.s_minus, thr.s_plus, tau)
    np.testing.assert_allclose((got.d1, got.d2), (d.d1, d.d2), rtol=1e-7, atol=1e-14)
    assert thr.residual <= 1e-8 and thr.s_minus <= thr.s_plus


def test_ternary_d1_is_bounded():
    # phi(a) + phi(b) <= 2 phi(0), so d1 <= 2 / (pi tau); identity at tau = 1 asks for 1
    rng = np.random.default_rng(0)
    for a, b in np.sort(rng.normal(0, 2, (200, 2)), axis=1):
        assert moments_ternary_closed(a, b, 1.0).d1 <= 2 / math.pi + 1e-15
    with pytest.raises(CalibrationError) as exc:
        solve_thresholds(1.0, 0.0, 1.0)
    assert exc.value.best.residual > 1e-8


def test_ternary_d2_is_bounded():
    # |a phi(a) + b phi(b)| <= 2 phi(1), which caps d2 at 4 phi(1)^2 / (4 tau^2)
    cap = (2 * math.exp(-0.5) / math.sqrt(2 * math.pi)) ** 2 / 4
    grid = np.linspace(-6, 6, 601)
    A, B = np.meshgrid(grid, grid)
    vals = (A * np.exp(-A**2 / 2) + B * np.exp(-B**2 / 2)) / math.sqrt(2 * math.pi)
    assert (vals**2 / 4).max() <= cap + 1e-15
    d = moments_closed_form(RFFPair(), 1.0)
    assert d.d2 > cap
    with pytest.raises(CalibrationError):
        solve_thresholds(d.d1, d.d2, 1.0)


def test_best_effort_calibration():
    d = moments_closed_form(RFFPair(), 1.0)
    thr = solve_thresholds(d.d1, d.d2, 1.0, strict=False)
    assert not thr.success
    with pytest.raises(CalibrationError) as exc:
        solve_thresholds(d.d1, d.d2, 1.0)
    assert thr.residual == pytest.approx(exc.value.best.residual, rel=1e-6)


def test_calibration_rejects_bad_targets():
    with pytest.raises(ValueError):
        solve_thresholds(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        solve_thresholds(0.1, 0.0, -1.0)


def test_thresholds_invariant():
    with pytest.raises(ValueError):
        Thresholds(1.0, 0.0, 1.0, (0.1, 0.0), 0.0)


# --------------------------------------------------------------------------
# weights and packing
# --------------------------------------------------------------------------


def test_dense_weights_when_not_sparse():
    W = sample_ternary_weights(TernaryWeightSpec(10, 70, 0.0, 3))
    assert W.scale == 1.0
    assert W.nnz() == 700
    np.testing.assert_array_equal(np.abs(W.unpack()), 1)


def test_sparse_weight_fraction():
    W = sample_ternary_weights(TernaryWeightSpec(1024, 1024, 0.9, 0))
    assert 0.094 <= W.nnz() / 2**20 <= 0.106
    assert W.scale == pytest.approx(1 / math.sqrt(0.1))


@pytest.mark.parametrize("eps", [0.0, 0.5, 0.9])
def test_weight_entry_moments(eps):
    W = sample_ternary_weights(TernaryWeightSpec(1024, 1024, eps, 1)).to_dense()
    N = W.size
    # entry variance is 1 and fourth moment 1/(1-eps)
    assert abs(W.mean()) <= 3 / math.sqrt(N)
    assert abs((W**2).mean() - 1) <= 3 * math.sqrt((1 / (1 - eps) - 1) / N) + 1e-12
    frac = np.count_nonzero(W) / N
    assert abs(frac - (1 - eps)) <= 3 * math.sqrt(eps * (1 - eps) / N) + 1e-12


def test_weights_are_deterministic():
    a = sample_ternary_weights(TernaryWeightSpec(300, 90, 0.5, 7))
    b = sample_ternary_weights(TernaryWeightSpec(300, 90, 0.5, 7))
    c = sample_ternary_weights(TernaryWeightSpec(300, 90, 0.5, 8))
    assert a == b and not a == c


def test_weight_spec_validation():
    with pytest.raises(RejectedInput):
        TernaryWeightSpec(4, 4, 1.0, 0)
    with pytest.raises(RejectedInput):
        TernaryWeightSpec(4, 4, -0.1, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 200), st.integers(0, 2**31))
def test_pack_unpack_identity(rows, cols, seed):
    v = np.random.default_rng(seed).integers(-1, 2, (rows, cols)).astype(np.int8)
    P = PackedTernaryMatrix.from_dense(v, 2.5)
    np.testing.assert_array_equal(P.unpack(), v)
    assert np.all((P.sign_plane & ~P.mask_plane) == 0)
    assert PackedTernaryMatrix.from_dense(P.unpack(), 2.5) == P
    np.testing.assert_array_equal(P.transpose().unpack(), v.T)


def test_sign_outside_mask_is_rejected():
    mask = np.zeros((1, 1), np.uint64)
    sign = np.ones((1, 1), np.uint64)
    with pytest.raises(ValueError):
        PackedTernaryMatrix(1, 3, mask, sign)


def test_packed_file_round_trip(tmp_path):
    W = sample_ternary_weights(TernaryWeightSpec(37, 130, 0.3, 2))
    data = W.to_bytes()
    assert data[:4] == b"TRF1"
    assert len(data) == 20 + 2 * 37 * 3 * 8
    assert PackedTernaryMatrix.from_bytes(data) == W
    W.save(tmp_path / "w.trf")
    assert PackedTernaryMatrix.load(tmp_path / "w.trf") == W
    with pytest.raises(ValueError):
        PackedTernaryMatrix.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        PackedTernaryMatrix.from_bytes(data[:-8])


def test_storage_accounting():
    m, n = 256, 512
    F = PackedTernaryMatrix.from_dense(np.zeros((m, n), np.int8))
    assert F.nbytes == math.ceil(m * n / 8) * 2 + 20
    assert feature_bits(F) == 2 * m * n
    assert 32 * m * n / (8 * F.nbytes) >= 15.9
    assert feature_bits(np.zeros((m, n))) == 32 * m * n


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------


def test_identity_pattern_transform():
    W = PackedTernaryMatrix.from_dense(np.eye(2, dtype=np.int8))
    thr = Ternary(-1.0, 1.0)
    X = np.array([[2.0], [0.0]])
    np.testing.assert_array_equal(ternary_transform(W, X, thr).unpack(), [[1], [0]])


def test_threshold_boundary_maps_to_zero():
    W = PackedTernaryMatrix.from_dense(np.array([[1, 0], [-1, 0]], np.int8))
    X = np.array([[0.5, -0.5, 0.7], [9.0, 9.0, 9.0]])
    out = ternary_transform(W, X, Ternary(-0.5, 0.5)).unpack()
    np.testing.assert_array_equal(out, [[0, 0, 1], [0, 0, -1]])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 128), st.integers(1, 128), st.integers(1, 128),
       st.sampled_from([0.0, 0.3, 0.5, 0.9]), st.integers(0, 2**31))
def test_transform_matches_dense_reference(m, n, p, eps, seed):
    rng = np.random.default_rng(seed)
    W = sample_ternary_weights(TernaryWeightSpec(m, p, eps, seed))
    X = rng.standard_normal((p, n))
    sm, sp = np.sort(rng.normal(0, 0.7, 2))
    ref = dense_ternary_reference(W.unpack(), X, W.scale, sm, sp)
    np.testing.assert_array_equal(ternary_transform(W, X, Ternary(sm, sp)).unpack(), ref)


def test_transform_p64_m32_example():
    rng = np.random.default_rng(4)
    W = sample_ternary_weights(TernaryWeightSpec(32, 64, 0.5, 4))
    X = rng.standard_normal((64, 50))
    thr = Ternary(-0.3, 0.6)
    ref = dense_ternary_reference(W.unpack(), X, W.scale, -0.3, 0.6)
    np.testing.assert_array_equal(ternary_transform(W, Dataset(X, np.zeros(50, int)), thr).unpack(), ref)


def test_transform_counts_no_multiplies():
    rng = np.random.default_rng(0)
    W = sample_ternary_weights(TernaryWeightSpec(100, 70, 0.6, 0))
    X = rng.standard_normal((70, 33))
    with opcount.counting() as ops:
        F = ternary_transform(W, X, Ternary(-0.2, 0.2))
        gram(F)
    assert ops.multiplies == 0
    assert ops.additions == W.nnz() * 33
    assert ops.scale_multiplies == 100 * 33 + 33 * 33


def test_transform_dimension_mismatch():
    W = sample_ternary_weights(TernaryWeightSpec(4, 5, 0.0, 0))
    with pytest.raises(ValueError):
        ternary_transform(W, np.zeros((6, 2)), Ternary(0, 0))


def _no_fmul(fn, *args):
    fresh = numba.njit(fn.py_func)
    fresh(*args)
    ir = "".join(fresh.inspect_llvm().values())
    return "fadd" in ir and "fmul" not in ir


def test_accumulation_loops_have_no_float_multiply():
    u = np.zeros((4, 1), np.uint64)
    assert _no_fmul(bits.accumulate_group, u, u, np.zeros((8, 4)), np.zeros((32, 4)),
                    0, 4, 4, np.uint64(2**32 - 1))
    assert _no_fmul(bits.accumulate_row, u[0], u[0], np.zeros((4, 4)), np.zeros(4),
                    np.zeros(4, np.int64), np.zeros(4, np.uint64))


def test_dense_transform_examples():
    I = np.eye(3)
    np.testing.assert_array_equal(dense_transform(I, I, Identity()), I)
    F = dense_transform(np.ones((1, 2)), np.array([[1.0], [-1.0]]), RFFPair())
    np.testing.assert_array_equal(F, [[1.0], [0.0]])
    assert dense_transform(np.array([[3.0]]), np.array([[-1.0]]), ReLU())[0, 0] == 0.0
    with pytest.raises(ValueError):
        dense_transform(I, I, Ternary(0, 0))
    with pytest.raises(ValueError):
        dense_transform(np.eye(2), I, ReLU())


# --------------------------------------------------------------------------
# gram matrices
# --------------------------------------------------------------------------


def test_gram_hand_example():
    F = PackedTernaryMatrix.from_dense(np.array([[1, 1], [-1, 1], [0, 0]], np.int8))
    assert gram(F)[0, 1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 150), st.integers(1, 90), st.integers(0, 2**31))
def test_packed_gram_matches_dense(m, n, seed):
    v = np.random.default_rng(seed).integers(-1, 2, (m, n)).astype(np.int8)
    F = PackedTernaryMatrix.from_dense(v)
    np.testing.assert_array_equal(gram(F), gram(v.astype(float)))


def test_cross_gram_matches_dense():
    rng = np.random.default_rng(1)
    a = rng.integers(-1, 2, (70, 9)).astype(np.int8)
    b = rng.integers(-1, 2, (70, 5)).astype(np.int8)
    got = cross_gram(PackedTernaryMatrix.from_dense(a), PackedTernaryMatrix.from_dense(b))
    np.testing.assert_array_equal(got, a.T.astype(float) @ b / 70)


def test_gram_is_psd_and_scaled_by_draws():
    rng = np.random.default_rng(2)
    W = rng.standard_normal((40, 6))
    X = rng.standard_normal((6, 30))
    F = dense_transform(W, X, RFFPair())
    G = gram(F, m=40)
    np.testing.assert_allclose(np.diag(G), 1.0, atol=1e-12)
    ev = np.linalg.eigvalsh(G)
    assert ev.min() >= -1e-10 * ev.max()
