"""NURBS patch for the rectangular harvester plate.

The design vector ``x = [L, l, H]`` (plus fixed aspect ratio ``R`` and total
thickness ``h``) is expanded into physical dimensions, and the plate
``[0, L] x [0, W]`` is parameterised by a tensor-product NURBS patch whose
knot vector in the length direction carries a knot exactly at the end of
the piezoelectric layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DomainError, GeometryError

BOUNDS = {
    "L": (0.1, 0.5),
    "l": (0.1, 1.0),
    "H": (0.05, 0.45),
}
DESIGN_KEYS = ("L", "l", "H")


@dataclass(frozen=True)
class ShapeParams:
    """Design vector of the harvester.

    ``L`` is the length [m], ``l = L_pzt / L`` and ``H = h_p / h`` are
    dimensionless, ``R = W / L`` is the aspect ratio and ``h`` the total
    thickness [m].
    """

    L: float
    l: float
    H: float
    R: float = 1.0
    h: float = 1e-3

    def __post_init__(self):
        for name, (lo, hi) in BOUNDS.items():
            value = getattr(self, name)
            if not np.isfinite(value) or value < lo or value > hi:
                raise BoundsError(name, value, lo, hi)
        if not self.R > 0:
            raise BoundsError("R", self.R, 0.0, np.inf)
        if not self.h > 0:
            raise BoundsError("h", self.h, 0.0, np.inf)

    @classmethod
    def from_vector(cls, x, R: float = 1.0, h: float = 1e-3) -> "ShapeParams":
        L, l, H = (float(v) for v in x)
        return cls(L=L, l=l, H=H, R=R, h=h)

    def vector(self) -> np.ndarray:
        return np.array([self.L, self.l, self.H])

    def to_dict(self) -> dict:
        return {"L": self.L, "l": self.l, "H": self.H, "R": self.R, "h": self.h}


def design_bounds() -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([BOUNDS[k][0] for k in DESIGN_KEYS])
    hi = np.array([BOUNDS[k][1] for k in DESIGN_KEYS])
    return lo, hi


@dataclass(frozen=True)
class DeviceDimensions:
    L: float
    W: float
    h: float
    h_p: float
    h_s: float
    L_pzt: float


def expand_shape(params: ShapeParams) -> DeviceDimensions:
    h_p = params.H * params.h
    return DeviceDimensions(
        L=params.L,
        W=params.R * params.L,
        h=params.h,
        h_p=h_p,
        h_s=params.h - 2.0 * h_p,
        L_pzt=params.l * params.L,
    )


# --------------------------------------------------------------------------
# one-dimensional B-splines
# --------------------------------------------------------------------------

def open_uniform_knots(degree: int, n_spans: int) -> np.ndarray:
    inner = np.linspace(0.0, 1.0, n_spans + 1)
    return np.concatenate([np.zeros(degree), inner, np.ones(degree)])


def find_span(knots: np.ndarray, degree: int, u: float) -> int:
    """Index ``i`` with ``knots[i] <= u < knots[i+1]`` (last span for u = 1)."""
    n = len(knots) - degree - 1
    if u >= knots[n]:
        return n - 1
    return int(np.searchsorted(knots, u, side="right") - 1)


def basis_ders_1d(knots: np.ndarray, degree: int, span, u, n_ders: int = 2) -> np.ndarray:
    """Non-zero B-spline functions and derivatives on knot spans.

    Vectorised form of the triangular-table recurrence (Piegl & Tiller,
    A2.3); ``span`` is a scalar or an array matching ``u``.

    Returns an array of shape ``(len(u), n_ders + 1, degree + 1)``; entry
    ``[:, k, j]`` is the k-th derivative of ``N_{span - degree + j}``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    span = np.broadcast_to(np.asarray(span, dtype=np.int64), u.shape)
    p = degree
    m = u.size
    ndu = np.zeros((m, p + 1, p + 1))
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    ndu[:, 0, 0] = 1.0
    for j in range(1, p + 1):
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, n_ders + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    for r in range(p + 1):
        a = np.zeros((m, 2, p + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, n_ders + 1):
            d = np.zeros(m)
            rk = r - k
            pk = p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, n_ders + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


def greville(knots: np.ndarray, degree: int) -> np.ndarray:
    n = len(knots) - degree - 1
    return np.array([knots[i + 1:i + degree + 1].mean() for i in range(n)])


# --------------------------------------------------------------------------
# the patch
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NurbsPatch:
    """Tensor-product NURBS surface on the unit parameter square.

    Control points are stored as ``(n_u, n_v, 2)`` and weights as
    ``(n_u, n_v)``; the global basis index is ``i_u * n_v + i_v``.
    ``interface`` is the parametric ``u`` of the piezo/substrate edge, or
    ``None`` when the piezo layers cover the full length.
    """

    degrees: tuple[int, int]
    knots_u: np.ndarray
    knots_v: np.ndarray
    control_points: np.ndarray
    weights: np.ndarray
    interface: float | None = None
    extent: tuple[float, float] = field(default=(1.0, 1.0))

    def __post_init__(self):
        for arr in (self.knots_u, self.knots_v, self.control_points, self.weights):
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def n_basis(self) -> int:
        return int(np.prod(self.weights.shape))

    def spans(self, direction: int) -> np.ndarray:
        """Indices of non-empty knot spans along ``direction`` (0 = u)."""
        knots = self.knots_u if direction == 0 else self.knots_v
        p = self.degrees[direction]
        n = len(knots) - p - 1
        idx = np.arange(p, n)
        return idx[knots[idx + 1] > knots[idx]]

    def element_count(self) -> tuple[int, int]:
        return len(self.spans(0)), len(self.spans(1))


def _place_interface(knots: np.ndarray, degree: int, xi: float, multiplicity: int = 1,
                     snap: float = 0.25) -> np.ndarray:
    """Return ``knots`` with ``xi`` present ``multiplicity`` times.

    An interior knot closer than ``snap`` span widths is moved onto ``xi``
    instead of inserting a new one, so no sliver elements appear.
    """
    if xi <= 0.0 or xi >= 1.0:
        return knots
    inner = np.unique(knots[degree:len(knots) - degree])
    width = np.min(np.diff(inner))
    interior = inner[1:-1]
    if interior.size:
        j = int(np.argmin(np.abs(interior - xi)))
        if abs(interior[j] - xi) < snap * width:
            interior = np.delete(interior, j)
    new_inner = np.sort(np.concatenate([interior, np.full(multiplicity, xi)]))
    return np.concatenate([np.zeros(degree + 1), new_inner, np.ones(degree + 1)])


def build_patch(dims: DeviceDimensions, degrees=(3, 3), elements=(8, 8),
                interface_continuity: int = 1) -> NurbsPatch:
    """Rectangle ``[0, L] x [0, W]`` with a knot line at ``x = L_pzt``.

    The interface knot is repeated to leave ``interface_continuity``
    continuous derivatives there (C1 by default: the bending moment is
    continuous across the thickness jump, the curvature is not).
    """
    p, q = (int(d) for d in degrees)
    if p < 2 or q < 2:
        raise GeometryError(
            f"degrees {degrees} give less than C1 continuity; the plate bending operator needs p, q >= 2"
        )
    n_x, n_y = (int(e) for e in elements)
    if n_x < 2 or n_y < 2:
        raise GeometryError(f"need at least 2x2 elements, got {elements}")
    if not 1 <= interface_continuity <= p - 1:
        raise GeometryError(f"interface continuity must lie in [1, {p - 1}]")

    xi_if = dims.L_pzt / dims.L
    knots_u = _place_interface(open_uniform_knots(p, n_x), p, xi_if, p - interface_continuity)
    knots_v = open_uniform_knots(q, n_y)
    gu = greville(knots_u, p)
    gv = greville(knots_v, q)
    cp = np.empty((gu.size, gv.size, 2))
    cp[..., 0] = dims.L * gu[:, None]
    cp[..., 1] = dims.W * gv[None, :]
    weights = np.ones((gu.size, gv.size))
    interface = xi_if if 0.0 < xi_if < 1.0 else None
    return NurbsPatch((p, q), knots_u, knots_v, cp, weights, interface, (dims.L, dims.W))


# --------------------------------------------------------------------------
# two-dimensional evaluation
# --------------------------------------------------------------------------

def _rational(Nu, Nv, w):
    """Rational basis and parametric derivatives for tensor products.

    ``Nu``: (..., 3, a) values/1st/2nd derivatives in u, ``Nv``: (..., 3, b),
    ``w``: (..., a, b) local weights. Returns a dict of (..., a*b) arrays.
    """
    def tp(du, dv):
        return np.einsum("...a,...b,...ab->...ab", Nu[..., du, :], Nv[..., dv, :], w)

    terms = {k: tp(*k) for k in ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))}
    sums = {k: v.sum(axis=(-2, -1))[..., None, None] for k, v in terms.items()}
    W = sums[(0, 0)]
    R = terms[(0, 0)] / W
    Ru = (terms[(1, 0)] - R * sums[(1, 0)]) / W
    Rv = (terms[(0, 1)] - R * sums[(0, 1)]) / W
    Ruu = (terms[(2, 0)] - 2.0 * Ru * sums[(1, 0)] - R * sums[(2, 0)]) / W
    Rvv = (terms[(0, 2)] - 2.0 * Rv * sums[(0, 1)] - R * sums[(0, 2)]) / W
    Ruv = (terms[(1, 1)] - Ru * sums[(0, 1)] - Rv * sums[(1, 0)] - R * sums[(1, 1)]) / W
    shape = R.shape[:-2] + (-1,)
    return {k: v.reshape(shape) for k, v in
            dict(R=R, Ru=Ru, Rv=Rv, Ruu=Ruu, Rvv=Rvv, Ruv=Ruv).items()}


def _to_physical(par, X):
    """Map parametric derivatives to physical ones through ``x(u, v)``.

    ``par`` holds (..., n) arrays; ``X`` is (..., n, 2) local control points.
    """
    def apply(R):
        return np.matmul(R[..., None, :], X)[..., 0, :]

    xu, xv = apply(par["Ru"]), apply(par["Rv"])
    xuu, xvv, xuv = apply(par["Ruu"]), apply(par["Rvv"]), apply(par["Ruv"])
    J = np.stack([xu, xv], axis=-1)  # J[..., i, j] = d x_i / d u_j
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(detJ <= 0):
        raise GeometryError("non-positive Jacobian in geometric map")
    grad_par = np.stack([par["Ru"], par["Rv"]], axis=-1)
    Jinv_T = np.linalg.inv(np.swapaxes(J, -1, -2))
    grad = np.einsum("...ij,...nj->...ni", Jinv_T, grad_par)
    Rx, Ry = grad[..., 0], grad[..., 1]

    # second derivatives: T @ [Rxx, Rxy, Ryy] = rhs
    T = np.empty(xu.shape[:-1] + (3, 3))
    T[..., 0, :] = np.stack([xu[..., 0] ** 2, 2 * xu[..., 0] * xu[..., 1], xu[..., 1] ** 2], -1)
    T[..., 1, :] = np.stack([xu[..., 0] * xv[..., 0],
                             xu[..., 0] * xv[..., 1] + xv[..., 0] * xu[..., 1],
                             xu[..., 1] * xv[..., 1]], -1)
    T[..., 2, :] = np.stack([xv[..., 0] ** 2, 2 * xv[..., 0] * xv[..., 1], xv[..., 1] ** 2], -1)
    rhs = np.stack([
        par["Ruu"] - Rx * xuu[..., None, 0] - Ry * xuu[..., None, 1],
        par["Ruv"] - Rx * xuv[..., None, 0] - Ry * xuv[..., None, 1],
        par["Rvv"] - Rx * xvv[..., None, 0] - Ry * xvv[..., None, 1],
    ], axis=-2)
    sec = np.linalg.solve(T, rhs)
    return {
        "N": par["R"], "N_x": Rx, "N_y": Ry,
        "N_xx": sec[..., 0, :], "N_xy": sec[..., 1, :], "N_yy": sec[..., 2, :],
        "detJ": detJ,
    }


def _local_indices(patch: NurbsPatch, su: int, sv: int) -> np.ndarray:
    p, q = patch.degrees
    n_v = patch.shape[1]
    iu = np.arange(su - p, su + 1)
    iv = np.arange(sv - q, sv + 1)
    return (iu[:, None] * n_v + iv[None, :]).ravel()


def eval_basis(patch: NurbsPatch, xi, derivative_order: int = 2) -> dict:
    """All basis functions and physical derivatives at one parametric point.

    Returns a dict of length-``n_basis`` arrays with keys ``N``, ``N_x``,
    ``N_y`` and, for ``derivative_order == 2``, ``N_xx``, ``N_yy``, ``N_xy``.
    """
    u, v = (float(c) for c in xi)
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0) or not np.isfinite([u, v]).all():
        raise DomainError(f"parametric point {xi} outside the unit square")
    if derivative_order not in (0, 1, 2):
        raise ValueError("derivative_order must be 0, 1 or 2")
    p, q = patch.degrees
    su = find_span(patch.knots_u, p, u)
    sv = find_span(patch.knots_v, q, v)
    Nu = basis_ders_1d(patch.knots_u, p, su, u, 2)[0]
    Nv = basis_ders_1d(patch.knots_v, q, sv, v, 2)[0]
    w = patch.weights[su - p:su + 1, sv - q:sv + 1]
    X = patch.control_points[su - p:su + 1, sv - q:sv + 1].reshape(-1, 2)
    phys = _to_physical(_rational(Nu, Nv, w), X)
    idx = _local_indices(patch, su, sv)
    keys = ["N", "N_x", "N_y", "N_xx", "N_yy", "N_xy"][: {0: 1, 1: 3, 2: 6}[derivative_order]]
    out = {}
    for k in keys:
        full = np.zeros(patch.n_basis)
        full[idx] = phys[k]
        out[k] = full
    return out


def evaluate_geometry(patch: NurbsPatch, xi) -> np.ndarray:
    """Physical point ``x(xi)``."""
    vals = eval_basis(patch, xi, 0)["N"]
    return vals @ patch.control_points.reshape(-1, 2)


@dataclass(frozen=True)
class Quadrature:
    """Basis data at every Gauss point of every element.

    Arrays are indexed ``[element, point, local function]``; ``dofs`` maps
    local to global indices and ``dA`` is Gauss weight times Jacobian.
    """

    dofs: np.ndarray
    dA: np.ndarray
    x: np.ndarray
    N: np.ndarray
    N_x: np.ndarray
    N_y: np.ndarray
    N_xx: np.ndarray
    N_yy: np.ndarray
    N_xy: np.ndarray
    element_u: np.ndarray  # parametric midpoint of each element in u


def quadrature(patch: NurbsPatch, points=None) -> Quadrature:
    """Gauss-Legendre data on all elements; default (p+1) x (q+1) points."""
    p, q = patch.degrees
    gp_u, gp_v = points if points is not None else (p + 1, q + 1)
    xg_u, wg_u = np.polynomial.legendre.leggauss(gp_u)
    xg_v, wg_v = np.polynomial.legendre.leggauss(gp_v)

    def per_direction(knots, deg, spans, xg, wg):
        a, b = knots[spans], knots[spans + 1]
        u = 0.5 * (b - a)[:, None] * (xg[None, :] + 1.0) + a[:, None]
        w = 0.5 * (b - a)[:, None] * wg[None, :]
        ders = basis_ders_1d(knots, deg, np.repeat(spans, xg.size), u.ravel(), 2)
        ders = ders.reshape(len(spans), xg.size, 3, deg + 1)
        return u, w, ders, 0.5 * (a + b)

    spans_u, spans_v = patch.spans(0), patch.spans(1)
    _, wu, Du, mid_u = per_direction(patch.knots_u, p, spans_u, xg_u, wg_u)
    _, wv, Dv, _ = per_direction(patch.knots_v, q, spans_v, xg_v, wg_v)
    eu, ev = len(spans_u), len(spans_v)

    # broadcast to (eu, ev, gu, gv, 3, a|b)
    Nu = np.broadcast_to(Du[:, None, :, None], (eu, ev, gp_u, gp_v, 3, p + 1))
    Nv = np.broadcast_to(Dv[None, :, None, :], (eu, ev, gp_u, gp_v, 3, q + 1))
    w_loc = np.empty((eu, ev, p + 1, q + 1))
    X_loc = np.empty((eu, ev, (p + 1) * (q + 1), 2))
    dofs = np.empty((eu, ev, (p + 1) * (q + 1)), dtype=np.int64)
    for i, su in enumerate(spans_u):
        for j, sv in enumerate(spans_v):
            w_loc[i, j] = patch.weights[su - p:su + 1, sv - q:sv + 1]
            X_loc[i, j] = patch.control_points[su - p:su + 1, sv - q:sv + 1].reshape(-1, 2)
            dofs[i, j] = _local_indices(patch, su, sv)
    par = _rational(Nu, Nv, w_loc[:, :, None, None])
    phys = _to_physical(par, X_loc[:, :, None, None])
    R = par["R"]
    xq = np.matmul(R[..., None, :], X_loc[:, :, None, None])[..., 0, :]

    n_el = eu * ev
    nq = gp_u * gp_v
    wq = wu[:, None, :, None] * wv[None, :, None, :]
    dA = wq * phys["detJ"]

    def flat(a):
        return np.ascontiguousarray(a.reshape(n_el, nq, -1))

    return Quadrature(
        dofs=dofs.reshape(n_el, -1),
        dA=dA.reshape(n_el, nq),
        x=xq.reshape(n_el, nq, 2),
        N=flat(phys["N"]), N_x=flat(phys["N_x"]), N_y=flat(phys["N_y"]),
        N_xx=flat(phys["N_xx"]), N_yy=flat(phys["N_yy"]), N_xy=flat(phys["N_xy"]),
        element_u=np.repeat(mid_u, ev),
    )
