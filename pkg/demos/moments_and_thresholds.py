"""Gaussian moments of common activations, and ternary thresholds that copy them.

Run with ``python3 demos/moments_and_thresholds.py``.
"""

from trf.moments import ReLU, RFFPair, Sign, builtin_activations, moments_closed_form, moments_of
from trf.ternary import CalibrationError, solve_thresholds

tau = 1.0

# The kernel of a random-features layer is pinned down, up to vanishing
# terms, by three numbers per activation. Closed forms and quadrature agree.
print(f"{'activation':>18} {'d0':>10} {'d1':>10} {'d2':>10}   quadrature gap")
for act in builtin_activations():
    d = moments_closed_form(act, tau)
    q = moments_of(act, tau, nodes=256)
    gap = max(abs(d.d0 - q.d0), abs(d.d1 - q.d1), abs(d.d2 - q.d2))
    print(f"{type(act).__name__:>18} {d.d0:10.6f} {d.d1:10.6f} {d.d2:10.6f}   {gap:.1e}")

# A ternary activation has two thresholds, enough to match (d1, d2).
for act in (ReLU(), Sign()):
    d = moments_closed_form(act, tau)
    thr = solve_thresholds(d.d1, d.d2, tau)
    print(f"\n{type(act).__name__}: s- = {thr.s_minus:.6f}, s+ = {thr.s_plus:.6f}, residual {thr.residual:.1e}")

# Not every target is reachable: ternary d2 is bounded, and the cos/sin
# pair at tau = 1 asks for more. The closest pair is still available.
d = moments_closed_form(RFFPair(), tau)
try:
    solve_thresholds(d.d1, d.d2, tau)
except CalibrationError as exc:
    best = solve_thresholds(d.d1, d.d2, tau, strict=False)
    print(f"\ncos/sin pair: {exc}")
    print(f"closest thresholds {best.s_minus:.4f}, {best.s_plus:.4f} (residual {best.residual:.3f})")
