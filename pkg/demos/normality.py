"""Weyl-sum diagnostics for points drawn from two measures.

Lebesgue-typical points are normal in every base, so the averaged squared
Weyl sums ``r_N`` fall like ``1/N``.  Points of the middle-thirds Cantor set
have ternary digits 0 and 2 only, so under ``x -> 3x`` they never
equidistribute: ``r_N`` stays near ``|mu^(1)|^2``.  Under ``x -> 2x`` the
same points behave like generic ones.
"""

from dynfourier.cli import load_config
from dynfourier.equidist import Lebesgue, normality_test
from dynfourier.ifs import system_from_dict
from dynfourier.measures import self_similar

cantor = self_similar(system_from_dict(load_config("cantor")[0]["system"]), [0.5, 0.5])
schedule = [16, 64, 256, 1024]

for label, measure, A in [("Lebesgue, x -> 2x", Lebesgue(), [[2]]),
                          ("Cantor,   x -> 3x", cantor, [[3]]),
                          ("Cantor,   x -> 2x", cantor, [[2]])]:
    rep = normality_test(measure, A, [[1]], schedule, samples=100, seed=0)
    est = rep.estimates[(1,)]
    print(f"{label}: verdict {rep.verdicts[(1,)]}")
    for N, r in zip(est.N, est.r_hat):
        print(f"    N = {N:5d}   r_N = {r:.5f}   N r_N = {N * r:7.3f}")
