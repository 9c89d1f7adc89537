"""Regenerate the Chebyshev coefficients used by ``numerics.bessel_k1`` for x > 2.

The tail approximates g(t) = exp(x) * sqrt(x) * K1(x) with x = 4 / (t + 1),
t in [-1, 1).  Coefficients come from interpolation at Chebyshev nodes with
mpmath at 50 digits and are printed ready to paste.
"""
import mpmath as mp

mp.mp.dps = 50
N = 48


def g(t):
    if t <= -1:
        return mp.sqrt(mp.pi / 2)
    x = 4 / (t + 1)
    return mp.exp(x) * mp.sqrt(x) * mp.besselk(1, x)


nodes = [mp.cos(mp.pi * (k + mp.mpf(1) / 2) / N) for k in range(N)]
vals = [g(t) for t in nodes]
coeffs = []
for j in range(N):
    s = mp.fsum(vals[k] * mp.cos(mp.pi * j * (k + mp.mpf(1) / 2) / N) for k in range(N))
    coeffs.append(2 * s / N if j else s / N)

keep = [c for c in coeffs]
while abs(keep[-1]) < 1e-18:
    keep.pop()
for c in keep:
    print(f"    {mp.nstr(c, 20, min_fixed=-1, max_fixed=0)},")
