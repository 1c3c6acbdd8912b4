"""Independent reference solutions used by the FE and acceptance tests."""
import numpy as np
from numpy.polynomial import legendre as leg
from scipy.linalg import eigh

from pehopt.geometry import ShapeParams, expand_shape
from pehopt.materials import MaterialSet

CFFF_SQUARE_LAMBDA = 3.471  # omega a^2 sqrt(rho h / D), nu = 0.3, converged Ritz value


def euler_bernoulli_bimorph(params: ShapeParams, mats: MaterialSet) -> float:
    """First bending frequency of a clamped-free composite beam.

    Beam modulus of each layer is the plate stiffness condensed for a free
    transverse edge, c11 - c12^2 / c22 (equal to E for the isotropic
    substrate and 1/s11 for the piezo).
    """
    d = expand_shape(params)
    s, p = mats.substrate, mats.piezo
    Ep = p.c11E - p.c12E ** 2 / p.c22E
    z2 = 2 / 3 * ((d.h / 2) ** 3 - (d.h_s / 2) ** 3)
    EI = s.E * d.h_s ** 3 / 12 + Ep * z2
    m = s.rho * d.h_s + 2 * p.rho * d.h_p
    return 1.87510407 ** 2 / (2 * np.pi * d.L ** 2) * np.sqrt(EI / m)


def uniform_materials(base: MaterialSet | None = None) -> MaterialSet:
    """Piezo layers replaced by substrate material: a homogeneous plate."""
    base = base or MaterialSet()
    s = base.substrate
    c = s.E / (1 - s.nu ** 2)
    return base.with_changes(piezo={
        "c11E": c, "c22E": c, "c12E": s.nu * c, "c66E": 0.5 * (1 - s.nu) * c,
        "rho": s.rho, "nu": s.nu,
    })


def _legendre_table(n, s):
    """P_k, P_k', P_k'' (w.r.t. s) at points ``s`` for k < n."""
    out = np.empty((3, n, s.size))
    for k in range(n):
        c = np.zeros(k + 1)
        c[k] = 1.0
        out[0, k] = leg.legval(s, c)
        out[1, k] = leg.legval(s, leg.legder(c, 1)) if k >= 1 else 0.0
        out[2, k] = leg.legval(s, leg.legder(c, 2)) if k >= 2 else 0.0
    return out


def _clamped_basis(n, xi, L):
    """xi^2 P_k(2 xi - 1) and its x-derivatives, x = L xi (w = w' = 0 at xi = 0)."""
    P, dP, ddP = _legendre_table(n, 2 * xi - 1)
    f0 = xi ** 2 * P
    f1 = 2 * xi * P + 2 * xi ** 2 * dP
    f2 = 2 * P + 8 * xi * dP + 4 * xi ** 2 * ddP
    return f0, f1 / L, f2 / L ** 2


def _free_basis(n, eta, W):
    P, dP, ddP = _legendre_table(n, 2 * eta - 1)
    return P, 2 * dP / W, 4 * ddP / W ** 2


def ritz_plate_frequency(L, W, h, E, nu, rho, terms=(15, 15)) -> float:
    """Fundamental frequency [Hz] of a plate clamped at x = 0, free elsewhere."""
    nx, ny = terms
    g, w = leg.leggauss(max(nx, ny) + 12)
    pts, wts = 0.5 * (g + 1), 0.5 * w
    X = _clamped_basis(nx, pts, L)
    Y = _free_basis(ny, pts, W)

    def I(F, p, q, length):
        return (F[p] * wts * length) @ F[q].T

    A = {(p, q): I(X, p, q, L) for p in range(3) for q in range(3)}
    B = {(p, q): I(Y, p, q, W) for p in range(3) for q in range(3)}
    D = E * h ** 3 / (12 * (1 - nu ** 2))
    K = D * (np.kron(A[2, 2], B[0, 0]) + np.kron(A[0, 0], B[2, 2])
             + nu * (np.kron(A[2, 0], B[0, 2]) + np.kron(A[0, 2], B[2, 0]))
             + 2 * (1 - nu) * np.kron(A[1, 1], B[1, 1]))
    M = rho * h * np.kron(A[0, 0], B[0, 0])
    lam = eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(np.sqrt(lam) / (2 * np.pi))
