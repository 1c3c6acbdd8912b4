"""Material sets for the bronze/PZT-5A bimorph."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Substrate:
    E: float = 105e9
    nu: float = 0.30
    rho: float = 9000.0

    def stiffness(self) -> np.ndarray:
        """Plane-stress isotropic matrix acting on (k_xx, k_yy, 2 k_xy)."""
        c = self.E / (1.0 - self.nu ** 2)
        return c * np.array([
            [1.0, self.nu, 0.0],
            [self.nu, 1.0, 0.0],
            [0.0, 0.0, 0.5 * (1.0 - self.nu)],
        ])


@dataclass(frozen=True)
class Piezo:
    # plane-stress reduced constants at constant field [Pa]
    c11E: float = 69.5e9
    c22E: float = 69.5e9
    c12E: float = 24.3e9
    c66E: float = 22.6e9
    # stress constants [C/m^2]
    e31: float = -16.0
    e32: float = -16.0
    eps33S: float = 9.57e-9
    rho: float = 7800.0
    nu: float = 0.30

    def stiffness(self) -> np.ndarray:
        return np.array([
            [self.c11E, self.c12E, 0.0],
            [self.c12E, self.c22E, 0.0],
            [0.0, 0.0, self.c66E],
        ])

    def coupling(self) -> np.ndarray:
        """Stress per unit transverse field, paired with the curvature vector."""
        return np.array([self.e31, self.e32, 0.0])


@dataclass(frozen=True)
class Damping:
    alpha: float = 14.65
    beta: float = 1e-5


@dataclass(frozen=True)
class MaterialSet:
    substrate: Substrate = field(default_factory=Substrate)
    piezo: Piezo = field(default_factory=Piezo)
    damping: Damping = field(default_factory=Damping)

    def __post_init__(self):
        s, p, d = self.substrate, self.piezo, self.damping
        positive = {
            "substrate.E": s.E, "substrate.rho": s.rho,
            "piezo.c11E": p.c11E, "piezo.c22E": p.c22E, "piezo.c66E": p.c66E,
            "piezo.eps33S": p.eps33S, "piezo.rho": p.rho,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, nu in (("substrate.nu", s.nu), ("piezo.nu", p.nu)):
            if not 0.0 < nu < 0.5:
                raise ConfigError(f"{name} must lie in (0, 0.5), got {nu}")
        if d.alpha < 0 or d.beta < 0:
            raise ConfigError("damping coefficients must be non-negative")
        if np.any(np.linalg.eigvalsh(s.stiffness()) <= 0):
            raise ConfigError("substrate stiffness matrix is not positive definite")

    def with_changes(self, substrate=None, piezo=None, damping=None) -> "MaterialSet":
        """Copy with some fields of the sub-records replaced."""
        return MaterialSet(
            substrate=replace(self.substrate, **(substrate or {})),
            piezo=replace(self.piezo, **(piezo or {})),
            damping=replace(self.damping, **(damping or {})),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MaterialSet":
        try:
            return cls(
                substrate=Substrate(**doc.get("substrate", {})),
                piezo=Piezo(**doc.get("piezo", {})),
                damping=Damping(**doc.get("damping", {})),
            )
        except TypeError as exc:
            raise ConfigError(f"bad material document: {exc}") from exc


PRESETS = {"bronze_pzt5a": MaterialSet()}


def load_materials(source) -> MaterialSet:
    """Preset name, JSON path, dict, or ``None`` for the default preset."""
    if source is None:
        return PRESETS["bronze_pzt5a"]
    if isinstance(source, MaterialSet):
        return source
    if isinstance(source, dict):
        return MaterialSet.from_dict(source)
    if isinstance(source, str) and source in PRESETS:
        return PRESETS[source]
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"unknown material preset or file: {source}")
    return MaterialSet.from_dict(json.loads(path.read_text()))
