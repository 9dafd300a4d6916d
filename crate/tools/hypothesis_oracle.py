"""Independent evaluation of the four concentration-radius conditions for the frozen
instance (n=2, m=1/2, K_D=1, mu=1, alpha=beta=1, chi=10, eps=0.1, eta=0.2, lambda=0.1,
K=1, T*=0.1, R=1, p=1/(1-2/n+eps)=10) at 50 significant digits."""
import sys
from mpmath import mp, mpf, pi, sqrt

mp.dps = 50

n, m, kd = 2, mpf(1) / 2, mpf(1)
mu, alpha, beta, chi = mpf(1), mpf(1), mpf(1), mpf(10)
eps, eta, lam = mpf("0.1"), mpf("0.2"), mpf("0.1")
K, tstar, R = mpf(1), mpf("0.1"), mpf(1)

b1 = pi  # |B_1| in two dimensions
p = 1 / (1 - mpf(2) / n + eps)
g1 = K * (R**n) ** ((p - 1) / p - (mpf(2) / n - eps)) / b1 ** (1 / p)
g2 = alpha / 2
g3 = 2 * beta + 1
c1 = mu * (1 - mpf("0.5") ** (n * (1 - eta))) / (2 * (1 - eta) * b1)
xi = (1 - mpf(2) / n - eta - lam) / (1 - m) + 1


def margins(r):
    quad = eta * g2 * (2 - eta) * c1**2 / (32 * r ** (n * eta))
    drift = 2 * mu * g1 * r ** (n * (mpf(2) / n - eps - eta)) / b1
    decay = eta * g2 * chi * (2 - eta) * c1 / (16 * r**n)
    diff = (n**2 * kd * (2 - mpf(2) / n - eta) / m) * (2 * mu * r ** (n * lam / m) / b1 + r ** (n * xi) / xi)
    hl = eta * g2 * chi * (2 - eta) / (8 * r ** (n * (2 - eta))) * tstar
    hr = 2 / (c1 * r ** (n * (1 - eta)))
    return [quad / drift - 1, decay / g3 - 1, quad / diff - 1, hl / hr - 1]


radii = [mpf(1), mpf("0.1"), mpf("0.01"), mpf("0.001"), mpf("1e-6")]
if len(sys.argv) > 1:
    radii.append(mpf(sys.argv[1]))
for r in radii:
    print(mp.nstr(r, 17), [mp.nstr(x, 17) for x in margins(r)])
