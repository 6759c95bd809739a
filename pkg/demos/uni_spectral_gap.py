"""Twisted transfer operators with and without non-integrability.

For similitudes the twisted operator maps the constant 1 to the constant
``z(b) = sum p_a r_a^(ib)``.  With equal ratios ``|z(b)| = 1`` for every b,
so nothing decays.  With ratios 1/2 and 1/3 the rate is ``|z(b)|``, which
returns arbitrarily close to 1 along a sequence of b.  Mixing in Möbius maps
makes ``log |f_a'|`` genuinely vary with the point (the UNI margin is
positive), and the operator norms then shrink at a uniform rate for every
twist b tried.
"""

import numpy as np

from dynfourier.cli import load_config
from dynfourier.ifs import IFSSystem, Similitude, system_from_dict
from dynfourier.transfer import TwistedOperator, norm_decay, uni_margin

uni = system_from_dict(load_config("uni_mobius")[0]["system"])
control = system_from_dict(load_config("similitude_control")[0]["system"])

print("UNI margin eps0 at depth 4")
print(f"  Möbius system      {uni_margin(uni, 4).eps0:.4f}")
print(f"  similitude control {uni_margin(control, 4).eps0:.4f}")

b_list = [10.0, 30.0, 60.0, 100.0]
I = np.eye(1)
systems = {
    "Möbius UNI": (uni, [0.25] * 4, 3),
    "ratios 1/2, 1/2": (IFSSystem([Similitude(0.5, I, [0.0]), Similitude(0.5, I, [0.5])]), [0.5, 0.5], 2),
    "ratios 1/2, 1/3": (IFSSystem([Similitude(0.5, I, [0.0]), Similitude(1 / 3, I, [2 / 3])]), [0.5, 0.5], 2),
}
print("\nfitted decay rate rho of ||L_ib^n 1||")
print(f"  {'b':>6}" + "".join(f"  {name:>16}" for name in systems))
tables = [norm_decay(TwistedOperator(S, p), 12, b_list, depth=d) for S, p, d in systems.values()]
for j, b in enumerate(b_list):
    print(f"  {b:6.1f}" + "".join(f"  {t.rho[j]:16.3f}" for t in tables))
