import math

import numpy as np
import pytest

from trf.data import GmmSpec, reference_mixture, sample_gmm
from trf.equivalent import (
    UnsupportedInput,
    build_equivalent,
    corollary_shift,
    equivalence_gap,
    lanczos_extreme,
)
from trf.kernels import ArcCos1, KernelMatrix, center, center_matrix, expected_kernel
from trf.moments import GaussianMoments, ReLU, Sin, moments_closed_form
from trf.ternary import dense_transform, gram
from trf.weights import WeightLaw, sample_dense


def moments(d0, d1, d2, tau=1.0):
    return GaussianMoments(d0, d1, d2, tau)


def isotropic(p, n, K=1):
    return GmmSpec(np.zeros((K, p)), np.stack([np.eye(p)] * K), (n // K,) * K)


def P(n):
    return np.eye(n) - 1.0 / n


def test_shift_only():
    _, stats = sample_gmm(reference_mixture(16, 20), 0)
    model = build_equivalent(stats, moments(1.0, 0.0, 0.0))
    np.testing.assert_allclose(model.Ktilde.values, P(20), atol=1e-15)


def test_single_class_quadratic_part():
    _, stats = sample_gmm(isotropic(12, 10), 1)
    model = build_equivalent(stats, moments(0.0, 0.0, 1.0))
    np.testing.assert_allclose(model.A, [[2.0, 0.0], [0.0, 1.0]])
    J, phi, p = stats.J, stats.phi, 12
    np.testing.assert_allclose(model.V @ model.A @ model.V.T, 2 * J @ J.T / p + np.outer(phi, phi), atol=1e-14)


def test_identity_activation_gives_linear_kernel():
    _, stats = sample_gmm(isotropic(12, 10), 2)
    model = build_equivalent(stats, moments(0.0, 1.0, 0.0))
    Pn = P(10)
    np.testing.assert_allclose(model.Ktilde.values, Pn @ stats.Z.T @ stats.Z @ Pn, atol=1e-13)


def test_model_invariants():
    spec = reference_mixture(32, 48)
    _, stats = sample_gmm(spec, 3)
    model = build_equivalent(stats, moments_closed_form(ReLU(), stats.tau))
    np.testing.assert_array_equal(model.A, model.A.T)
    np.testing.assert_allclose(sum(model.parts), model.Ktilde.values, atol=1e-10)
    assert model.Ktilde.is_symmetric() and model.Ktilde.centered
    assert np.abs(model.Ktilde.values @ np.ones(48)).max() <= 1e-9


def test_block_expansion_identity():
    rng = np.random.default_rng(4)
    p = 20
    covs = []
    for _ in range(3):
        B = rng.standard_normal((p, p))
        covs.append(B @ B.T / p)
    spec = GmmSpec(rng.standard_normal((3, p)), np.stack(covs), (5, 6, 7))
    _, stats = sample_gmm(spec, 0)
    model = build_equivalent(stats, moments(0.1, 0.2, 0.3))
    J, t, T, phi = stats.J, stats.t, stats.T, stats.phi
    expanded = ((J @ np.outer(t, t) @ J.T + 2 * J @ T @ J.T) / p
                + (J @ np.outer(t, phi) + np.outer(phi, t) @ J.T) / math.sqrt(p) + np.outer(phi, phi))
    np.testing.assert_allclose(model.V @ model.A @ model.V.T, expanded, atol=1e-10)


def test_zero_means_equal_covariances_reduce():
    p, n = 24, 30
    spec = GmmSpec(np.zeros((2, p)), np.stack([2.0 * np.eye(p)] * 2), (12, 18))
    _, stats = sample_gmm(spec, 5)
    model = build_equivalent(stats, moments(0.0, 0.0, 0.7))
    np.testing.assert_allclose(stats.t, 0.0, atol=1e-15)
    J, phi = stats.J, stats.phi
    reduced = center_matrix(0.7 * (2 * J @ stats.T @ J.T / p + np.outer(phi, phi)))
    np.testing.assert_allclose(model.quadratic_part, reduced, atol=1e-12)


def test_permutation_conjugates():
    _, stats = sample_gmm(reference_mixture(16, 24), 6)
    d = moments(0.2, 0.3, 0.4)
    perm = np.random.default_rng(0).permutation(24)
    a = build_equivalent(stats, d).Ktilde.values
    b = build_equivalent(stats.permuted(perm), d).Ktilde.values
    np.testing.assert_allclose(b, a[np.ix_(perm, perm)], atol=1e-14)


def test_file_data_is_unsupported():
    _, stats = sample_gmm(reference_mixture(8, 10), 0)
    bare = type(stats)(stats.M, stats.t, stats.T, stats.tau, stats.J)
    with pytest.raises(UnsupportedInput):
        build_equivalent(bare, moments(1, 1, 1))


def test_gap_of_model_with_itself():
    _, stats = sample_gmm(reference_mixture(16, 24), 0)
    model = build_equivalent(stats, moments(0.2, 0.3, 0.4))
    rep = equivalence_gap(model.Ktilde, model)
    assert (rep.spectral, rep.relative, rep.frobenius) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        equivalence_gap(np.eye(3), model)


def test_mismatched_moments_widen_the_gap():
    data, stats = sample_gmm(reference_mixture(128, 512), 0)
    K = center(expected_kernel(ArcCos1(), data))
    matched = equivalence_gap(K, build_equivalent(stats, moments_closed_form(ReLU(), stats.tau)))
    wrong = equivalence_gap(K, build_equivalent(stats, moments_closed_form(Sin(), stats.tau)))
    assert wrong.spectral > matched.spectral


def test_gap_is_law_independent():
    # heavy-tailed laws approach the Gaussian limit slowly in p, so only the
    # ternary law is held to a tight ratio here
    p, n = 64, 256
    data, stats = sample_gmm(reference_mixture(p, n), 1)
    model = build_equivalent(stats, moments_closed_form(ReLU(), stats.tau))
    gaps = {}
    for law in (WeightLaw("gaussian"), WeightLaw("student_t", dof=7), WeightLaw("ternary", epsilon=0.5)):
        for m in (2_000, 20_000):
            W = sample_dense(law, m, p, 2)
            G = center_matrix(gram(dense_transform(W, data, ReLU())))
            gaps[law.name, m] = equivalence_gap(G, model).spectral
    for name in ("gaussian", "student_t", "ternary"):
        assert gaps[name, 20_000] < gaps[name, 2_000]
    ratio = gaps["ternary", 20_000] / gaps["gaussian", 20_000]
    assert 0.75 <= ratio <= 1.25


def test_shift_recovers_exact_offset():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((30, 30))
    Kb = center_matrix(A @ A.T)
    Ka = Kb + 3 * P(30)
    rep = corollary_shift(Ka, Kb, 5.0, 2.0)
    assert rep.lam == 3.0
    assert rep.gap == pytest.approx(0.0, abs=1e-12)
    assert rep.lam_star == pytest.approx(3.0, abs=1e-6)
    assert rep.unshifted_gap == pytest.approx(3.0, abs=1e-12)


def test_shift_on_uncentered_difference():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((12, 12))
    Ka, Kb = A + A.T, np.zeros((12, 12))
    rep = corollary_shift(Ka, Kb, 0.0, 0.0)
    assert rep.gap == pytest.approx(np.abs(np.linalg.eigvalsh(Ka)).max(), rel=1e-12)
    assert rep.gap_star <= rep.gap + 1e-12
    with pytest.raises(ValueError):
        corollary_shift(np.eye(3), np.eye(4), 0, 0)


def test_lanczos_extremes():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((300, 300))
    A = (A + A.T) / 2
    lo, hi = lanczos_extreme(A)
    ev = np.linalg.eigvalsh(A)
    assert lo == pytest.approx(ev[0], rel=1e-8)
    assert hi == pytest.approx(ev[-1], rel=1e-8)
    assert lanczos_extreme(np.array([[2.0]])) == (2.0, 2.0)


def test_kernel_matrix_inputs_accepted():
    _, stats = sample_gmm(reference_mixture(8, 12), 0)
    model = build_equivalent(stats, moments(0.1, 0.2, 0.3))
    rep = equivalence_gap(KernelMatrix(model.Ktilde.values + 0.5 * P(12), centered=True), model)
    assert rep.spectral == pytest.approx(0.5, rel=1e-12)
