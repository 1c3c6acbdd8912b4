"""Assembly of the coupled electromechanical plate model.

Mechanical equation ``M w'' + C w' + K w - Theta v = F a_b`` and electrical
equation ``C_p v' + v / R_l + Theta^T w' = 0``; ``C = alpha M + beta K`` is
applied later in modal space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, MeshError
from .geometry import (
    DeviceDimensions,
    NurbsPatch,
    Quadrature,
    ShapeParams,
    build_patch,
    expand_shape,
    quadrature,
)
from .materials import MaterialSet, load_materials

COUPLING_WEIGHTS = ("first_moment", "z_squared")


@dataclass(frozen=True)
class LayerSection:
    """Through-thickness integrals of one region of the laminate."""

    inertia0: float       # integral of rho dz
    inertia2: float       # integral of rho z^2 dz
    bending: np.ndarray   # integral of c z^2 dz (3x3)
    coupling: np.ndarray  # e^T Z times the z-weight, summed over both layers


def sections(dims: DeviceDimensions, mats: MaterialSet, coupling_z_weight="first_moment"):
    """Return (substrate-only, piezo-pair) sections."""
    if coupling_z_weight not in COUPLING_WEIGHTS:
        raise ValueError(f"coupling_z_weight must be one of {COUPLING_WEIGHTS}")
    s, p = mats.substrate, mats.piezo
    hs, hp, h = dims.h_s, dims.h_p, dims.h
    sub = LayerSection(
        inertia0=s.rho * hs,
        inertia2=s.rho * hs ** 3 / 12.0,
        bending=s.stiffness() * hs ** 3 / 12.0,
        coupling=np.zeros(3),
    )
    z2_pair = 2.0 / 3.0 * ((h / 2) ** 3 - (hs / 2) ** 3)
    if coupling_z_weight == "first_moment":
        # series wiring: each layer sees v/2, opposite poling makes the two
        # first moments add; total weight ((h/2)^2 - (h_s/2)^2) / 2 / h_p
        zw = 0.5 * ((h / 2) ** 2 - (hs / 2) ** 2)
    else:
        zw = z2_pair
    pz = LayerSection(
        inertia0=2.0 * p.rho * hp,
        inertia2=p.rho * z2_pair,
        bending=p.stiffness() * z2_pair,
        coupling=p.coupling() * zw / hp,
    )
    return sub, pz


def capacitance(dims: DeviceDimensions, mats: MaterialSet) -> float:
    """Two parallel-plate layers of the electrode area wired in series."""
    if not dims.h_p > 0:
        raise AssemblyError("piezo thickness must be positive")
    return mats.piezo.eps33S * dims.L_pzt * dims.W / (2.0 * dims.h_p)


@dataclass(frozen=True)
class DeviceModel:
    """Full (unconstrained) matrices plus the cantilever DOF partition."""

    M: np.ndarray
    K: np.ndarray
    Theta: np.ndarray
    F: np.ndarray
    C_p: float
    R_l: float
    free: np.ndarray
    fixed: np.ndarray
    patch: NurbsPatch
    dims: DeviceDimensions
    materials: MaterialSet

    @property
    def n_dof(self) -> int:
        return self.free.size

    def constrained(self):
        """``(M, K, Theta, F)`` restricted to the free DOFs."""
        f = self.free
        return (self.M[np.ix_(f, f)], self.K[np.ix_(f, f)], self.Theta[f], self.F[f])

    @property
    def damping(self):
        return self.materials.damping


def _scatter(n, dofs, local):
    """Sum element matrices (n_el, a, a) into a dense (n, n) array."""
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    flat = np.bincount(rows * n + cols, weights=local.ravel(), minlength=n * n)
    return flat.reshape(n, n)


def _gram(A, B, w):
    """Per-element sum over points of w * A_a * B_b; A, B are (n_el, nq, n)."""
    return np.matmul((A * w[..., None]).transpose(0, 2, 1), B)


def _curvature_operator(q: Quadrature) -> np.ndarray:
    """B_I = -(N_xx, N_yy, 2 N_xy), shape (n_el, nq, a, 3)."""
    return -np.stack([q.N_xx, q.N_yy, 2.0 * q.N_xy], axis=-1)


def assemble(patch: NurbsPatch, dims: DeviceDimensions, mats: MaterialSet | None = None,
             R_l: float = 1000.0, coupling_z_weight: str = "first_moment",
             quad_points=None) -> DeviceModel:
    mats = load_materials(mats)
    if patch.interface is not None and not np.isclose(patch.interface * dims.L, dims.L_pzt,
                                                      rtol=1e-12, atol=1e-15):
        raise MeshError(
            f"interface knot at x={patch.interface * dims.L} does not match L_pzt={dims.L_pzt}")
    if patch.interface is None and not np.isclose(dims.L_pzt, dims.L, rtol=1e-12):
        raise MeshError("patch has no interface knot but the piezo layers are partial")

    q = quadrature(patch, quad_points)
    n = patch.n_basis
    sub, pz = sections(dims, mats, coupling_z_weight)
    xi_if = 1.0 if patch.interface is None else patch.interface
    in_piezo = (q.element_u < xi_if).astype(float)  # per element

    I0 = sub.inertia0 + in_piezo * pz.inertia0
    I2 = sub.inertia2 + in_piezo * pz.inertia2
    D = sub.bending[None] + in_piezo[:, None, None] * pz.bending[None]

    dA = q.dA
    Me = (_gram(q.N, q.N, dA) * I0[:, None, None]
          + (_gram(q.N_x, q.N_x, dA) + _gram(q.N_y, q.N_y, dA)) * I2[:, None, None])
    B = _curvature_operator(q)
    BD = B @ D[:, None]
    n_el, nq, a, _ = B.shape
    Ke = _gram(BD.transpose(0, 2, 1, 3).reshape(n_el, a, -1).transpose(0, 2, 1),
               B.transpose(0, 2, 1, 3).reshape(n_el, a, -1).transpose(0, 2, 1),
               np.repeat(dA, 3, axis=1))
    Te = np.einsum("eq,eqai,i->ea", dA, B, pz.coupling) * in_piezo[:, None]
    Fe = np.einsum("eq,eqa->ea", dA, q.N) * I0[:, None]

    M = _scatter(n, q.dofs, Me)
    K = _scatter(n, q.dofs, Ke)
    M = 0.5 * (M + M.T)
    K = 0.5 * (K + K.T)
    Theta = np.bincount(q.dofs.ravel(), weights=Te.ravel(), minlength=n)
    F = np.bincount(q.dofs.ravel(), weights=Fe.ravel(), minlength=n)

    # clamp x = 0: first two control-point columns in u
    n_u, n_v = patch.shape
    fixed = np.arange(2 * n_v)
    free = np.arange(2 * n_v, n)
    Mf = M[np.ix_(free, free)]
    try:
        np.linalg.cholesky(Mf)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError("constrained mass matrix is not positive definite") from exc

    return DeviceModel(
        M=M, K=K, Theta=Theta, F=F,
        C_p=capacitance(dims, mats), R_l=float(R_l),
        free=free, fixed=fixed, patch=patch, dims=dims, materials=mats,
    )


@dataclass(frozen=True)
class ModelSettings:
    """Discretisation and circuit settings shared by every design evaluation."""

    degrees: tuple[int, int] = (3, 3)
    elements: tuple[int, int] = (8, 8)
    n_modes: int = 5
    R_l: float = 1000.0
    coupling_z_weight: str = "first_moment"
    interface_continuity: int = 1
    residual_vectors: bool = True
    R: float = 1.0
    h: float = 1e-3
    materials: MaterialSet = MaterialSet()

    def shape(self, x) -> ShapeParams:
        return ShapeParams.from_vector(x, R=self.R, h=self.h)

    def to_dict(self) -> dict:
        return {
            "degrees": list(self.degrees), "elements": list(self.elements),
            "n_modes": self.n_modes, "R_l": self.R_l,
            "coupling_z_weight": self.coupling_z_weight,
            "interface_continuity": self.interface_continuity,
            "residual_vectors": self.residual_vectors,
            "R": self.R, "h": self.h, "materials": self.materials.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSettings":
        doc = dict(doc)
        if "materials" in doc:
            doc["materials"] = load_materials(doc["materials"])
        for key in ("degrees", "elements"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


def build_device(params: ShapeParams, settings: ModelSettings | None = None) -> DeviceModel:
    settings = settings or ModelSettings()
    dims = expand_shape(params)
    patch = build_patch(dims, settings.degrees, settings.elements, settings.interface_continuity)
    return assemble(patch, dims, settings.materials, settings.R_l, settings.coupling_z_weight)
