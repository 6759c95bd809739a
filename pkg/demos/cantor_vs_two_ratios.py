"""Fourier decay for two self-similar measures on the line.

The middle-thirds Cantor measure has a single contraction ratio 1/3, so
multiplying a frequency by 3 only shifts the infinite product defining its
transform: the peaks at 3^k never decay.  Replacing the ratios by 1/2 and
1/3, whose logarithms are rationally independent, destroys that resonance
and the band maxima drift down slowly.
"""

import numpy as np

from dynfourier.fourier import FunctionalEquation, decay_profile, fit_decay_exponent, fourier_transform
from dynfourier.ifs import IFSSystem, Similitude
from dynfourier.measures import self_similar

I = np.eye(1)
cantor = self_similar(IFSSystem([Similitude(1 / 3, I, [0.0]), Similitude(1 / 3, I, [2 / 3])]), [0.5, 0.5])
mixed = self_similar(IFSSystem([Similitude(1 / 2, I, [0.0]), Similitude(1 / 3, I, [2 / 3])]), [0.5, 0.5])

print("|mu^(3^k)| for the Cantor measure")
xi = 3.0 ** np.arange(8)
vals, errs = fourier_transform(cantor, xi, FunctionalEquation(1e-10))
for x, v in zip(xi, np.abs(vals)):
    print(f"  xi = {x:8.0f}   {v:.10f}")

print("\nband maxima of |mu^| over [T, 2T]")
print(f"  {'T':>8}  {'Cantor':>8}  {'1/2,1/3':>8}")
profiles = [decay_profile(m, 4e3, grid_step=0.1, T_min=10.0, evaluator=FunctionalEquation(1e-6))
            for m in (cantor, mixed)]
for (lo, _), a, b in zip(profiles[0].bands, profiles[0].max, profiles[1].max):
    print(f"  {lo:8.0f}  {a:8.4f}  {b:8.4f}")

for name, prof in zip(("Cantor", "1/2,1/3"), profiles):
    fit = fit_decay_exponent(prof, "polylog")
    print(f"\n{name}: polylog exponent {fit['exponent']:.3f} (residual {fit['residual']:.3f})")
