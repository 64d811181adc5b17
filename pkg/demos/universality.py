"""Eigenvalue histograms of random-feature Gram matrices under different weight laws.

Run with ``python3 demos/universality.py``. Takes about ten seconds.
"""

from trf.data import reference_mixture, sample_gmm
from trf.kernels import center_matrix
from trf.moments import ReLU, Sin
from trf.spectral import histogram_compare, sym_eig
from trf.ternary import dense_transform, gram
from trf.weights import WeightLaw, sample_dense

p, n, m = 256, 1024, 4096
data, _ = sample_gmm(reference_mixture(p, n), seed=0)


def spectrum(law, act):
    W = sample_dense(law, m, p, seed=1)
    return sym_eig(center_matrix(gram(dense_transform(W, data.X, act))), 1)


base = spectrum(WeightLaw("gaussian"), ReLU())
print(f"spikes of the Gaussian-weight ReLU kernel: {base.spikes.round(3)}")

# Only the first moments of the weight law matter; the bulk barely moves.
for law in (WeightLaw("student_t", dof=7), WeightLaw("ternary", epsilon=0.5)):
    print(f"{law.describe():>18}: TV distance {histogram_compare(base, spectrum(law, ReLU()), bins=50):.4f}")

# Changing the activation changes the moments, and the histogram follows.
print(f"{'sin activation':>18}: TV distance {histogram_compare(base, spectrum(WeightLaw('gaussian'), Sin()), bins=50):.4f}")
