"""Modal truncation of the clamped plate and Rayleigh modal damping."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenError
from .femodel import DeviceModel

DENSE_LIMIT = 500


@dataclass(frozen=True)
class ReducedModel:
    """Mass-normalised system ``eta'' + c_o eta' + k_o eta - theta_o v = f_o a_b``.

    The first ``n_eigen`` columns of ``Phi`` are true eigenmodes. Any further
    columns are Ritz pseudo-modes spanning the static residual of ``Theta``
    and ``F``; they lie above the last eigenmode and keep the system diagonal.
    """

    Phi: np.ndarray      # (n_free, K)
    omega: np.ndarray    # rad/s, ascending
    zeta: np.ndarray
    theta: np.ndarray    # Phi^T Theta
    force: np.ndarray    # Phi^T F
    C_p: float
    R_l: float
    n_eigen: int | None = None

    @property
    def n_modes(self) -> int:
        return self.omega.size

    @property
    def k_o(self) -> np.ndarray:
        return np.diag(self.omega ** 2)

    @property
    def c_o(self) -> np.ndarray:
        return np.diag(2.0 * self.zeta * self.omega)

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.omega / (2.0 * np.pi)

    @property
    def mode_frequencies_hz(self) -> np.ndarray:
        """Eigenfrequencies only, without residual pseudo-modes."""
        k = self.n_modes if self.n_eigen is None else self.n_eigen
        return self.frequencies_hz[:k]

    def with_resistance(self, R_l: float) -> "ReducedModel":
        return replace(self, R_l=float(R_l))


def rayleigh_zeta(omega, alpha: float, beta: float) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return alpha / (2.0 * omega) + beta * omega / 2.0


def _eig(K: np.ndarray, M: np.ndarray, n_modes: int):
    n = K.shape[0]
    try:
        if n <= DENSE_LIMIT or n_modes >= n - 1:
            lam, vec = scipy.linalg.eigh(K, M, subset_by_index=[0, n_modes - 1])
        else:
            lam, vec = spla.eigsh(sp.csc_matrix(K), k=n_modes, M=sp.csc_matrix(M),
                                  sigma=0.0, which="LM")
            order = np.argsort(lam)
            lam, vec = lam[order], vec[:, order]
    except (np.linalg.LinAlgError, spla.ArpackError, ValueError) as exc:
        cond = np.linalg.cond(M)
        raise EigenError(f"eigensolver failed ({exc}); cond(M_free)={cond:.3e}") from exc
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise EigenError(f"non-positive eigenvalue {lam.min():.3e}; cond(K_free)={np.linalg.cond(K):.3e}")
    # mass-normalise explicitly (eigsh returns unit-norm vectors)
    mass = np.einsum("ik,ij,jk->k", vec, M, vec)
    vec = vec / np.sqrt(mass)
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vec), axis=0)
    vec = vec * np.sign(vec[idx, np.arange(vec.shape[1])])
    return lam, vec


def _residual_modes(M, K, Phi, loads):
    """Ritz pairs on the part of ``K^-1 loads`` M-orthogonal to ``Phi``."""
    try:
        cho = scipy.linalg.cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise EigenError("constrained stiffness is not positive definite") from exc
    X = scipy.linalg.cho_solve(cho, loads)
    ref = np.trace(X.T @ M @ X)
    X = X - Phi @ (Phi.T @ (M @ X))
    X = X - Phi @ (Phi.T @ (M @ X))  # second pass for round-off
    g, V = np.linalg.eigh(X.T @ M @ X)
    keep = g > 1e-10 * ref
    if not np.any(keep):
        return np.zeros(0), np.zeros((M.shape[0], 0))
    Q = X @ (V[:, keep] / np.sqrt(g[keep]))
    lam, Y = np.linalg.eigh(Q.T @ K @ Q)
    Psi = Q @ Y
    idx = np.argmax(np.abs(Psi), axis=0)
    return lam, Psi * np.sign(Psi[idx, np.arange(Psi.shape[1])])


def solve_modes(model: DeviceModel, n_modes: int = 5, residual_vectors: bool = True) -> ReducedModel:
    """Lowest ``n_modes`` eigenmodes, optionally augmented with static residual vectors.

    The augmentation makes the reduced FRF exact at zero frequency and
    removes most of the truncation error below the retained modes.
    """
    M, K, Theta, F = model.constrained()
    n_modes = int(n_modes)
    if n_modes < 1 or n_modes > M.shape[0]:
        raise ValueError(f"mode count {n_modes} outside [1, {M.shape[0]}]")
    lam, Phi = _eig(K, M, n_modes)
    if residual_vectors and n_modes < M.shape[0]:
        lam_r, Psi = _residual_modes(M, K, Phi, np.column_stack([Theta, F]))
        lam = np.concatenate([lam, lam_r])
        Phi = np.column_stack([Phi, Psi])
    omega = np.sqrt(lam)
    d = model.damping
    return ReducedModel(
        Phi=Phi,
        omega=omega,
        zeta=rayleigh_zeta(omega, d.alpha, d.beta),
        theta=Phi.T @ Theta,
        force=Phi.T @ F,
        C_p=model.C_p,
        R_l=model.R_l,
        n_eigen=n_modes,
    )


def reduce_design(params, settings) -> ReducedModel:
    """Assemble and reduce one design with the given model settings."""
    from .femodel import build_device

    return solve_modes(build_device(params, settings), settings.n_modes, settings.residual_vectors)


def fundamental_frequency(model: DeviceModel) -> float:
    """Lowest natural frequency [Hz]."""
    return float(solve_modes(model, 1, residual_vectors=False).omega[0] / (2.0 * np.pi))
