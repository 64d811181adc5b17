"""Ridge regression with ternary and cos/sin random features, plus operation counts.

Run with ``python3 demos/ridge_tradeoff.py``. Takes about half a minute.
"""

import numpy as np

from trf.cli import bench_complexity
from trf.data import reference_mixture, sample_gmm, split
from trf.regression import SweepConfig, sweep

data, stats = sample_gmm(reference_mixture(256, 1536), seed=0)
train, test = split(data, 2 / 3, seed=0)
gammas = tuple(10.0 ** np.arange(-5, 2.5, 1.0))

cfg = SweepConfig(train, test, kinds=("rff", "trf"), m_grid=(512, 4096), epsilons=(0.9,),
                  gammas=gammas, seeds=(0,), target="rff", tau=stats.tau)
rows = sweep(cfg)

# Test MSE (normalized by target variance) along the regularization path.
for m in cfg.m_grid:
    print(f"\nm = {m}")
    print("  gamma     " + "  ".join(f"{g:8.0e}" for g in gammas))
    for kind in cfg.kinds:
        mse = [r.mse for r in rows if r.kind == kind and r.m == m]
        print(f"  {kind:8s}  " + "  ".join(f"{v:8.3f}" for v in mse))
    bits = {r.kind: r.feature_bits for r in rows if r.m == m}
    print(f"  feature storage: {bits['rff'] // 8} bytes dense, {bits['trf'] // 8} bytes packed")

# The ternary transform accumulates with additions only.
print()
for r in bench_complexity(512, 512, 512, [0.0, 0.5, 0.9], repeats=5):
    print(f"eps = {r.epsilon:.1f}: {r.additions} additions, {r.multiplies} multiplies, "
          f"{r.ternary_seconds * 1e3:.1f} ms (dense cos/sin {r.dense_seconds * 1e3:.1f} ms)")
