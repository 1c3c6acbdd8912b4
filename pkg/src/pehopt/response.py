"""Voltage FRF, time-domain simulation and harvested energy."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .excitation import AccelerationWindow
from .femodel import DeviceModel
from .integrators import integrate_sampled
from .modal import ReducedModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrfCurve:
    frequencies: np.ndarray  # Hz
    values: np.ndarray       # complex, V per m/s^2
    poles: np.ndarray = field(default=None)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def peak(self) -> tuple[float, float]:
        mag = np.where(np.isfinite(self.magnitude), self.magnitude, -np.inf)
        i = int(np.argmax(mag))
        return float(self.frequencies[i]), float(mag[i])


def _admittance_gain(omega, C_p, R_l):
    """``i w / (1/R_l + i w C_p)``."""
    return 1j * omega / (1.0 / R_l + 1j * omega * C_p)


def frf(reduced: ReducedModel, freqs) -> FrfCurve:
    """Output voltage per unit base acceleration on a frequency grid [Hz].

    The modal stiffness is diagonal and the electrical coupling is rank one,
    so the inner inverse is applied in closed form (Sherman-Morrison).
    """
    f = np.asarray(freqs, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency grid must be non-negative")
    w = 2.0 * np.pi * f
    wi, zi = reduced.omega[None, :], reduced.zeta[None, :]
    D = wi ** 2 - w[:, None] ** 2 + 2j * zi * wi * w[:, None]
    g = _admittance_gain(w, reduced.C_p, reduced.R_l)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_f = np.sum(reduced.theta * reduced.force / D, axis=1)
        s_t = np.sum(reduced.theta ** 2 / D, axis=1)
        H = -g * s_f / (1.0 + g * s_t)
    poles = ~np.isfinite(H)
    H = np.where(w == 0.0, 0.0 + 0.0j, H)
    poles &= w != 0.0
    return FrfCurve(f, H, poles)


def frf_full(model: DeviceModel, freqs) -> FrfCurve:
    """Same quantity from the unreduced constrained system (dense solves)."""
    M, K, Theta, F = model.constrained()
    d = model.damping
    C = d.alpha * M + d.beta * K
    f = np.asarray(freqs, dtype=float)
    out = np.empty(f.size, dtype=complex)
    poles = np.zeros(f.size, dtype=bool)
    for i, fi in enumerate(f):
        w = 2.0 * np.pi * fi
        if w == 0.0:
            out[i] = 0.0
            continue
        g = _admittance_gain(w, model.C_p, model.R_l)
        Z = -w ** 2 * M + 1j * w * C + K + g * np.outer(Theta, Theta)
        try:
            out[i] = -g * (Theta @ np.linalg.solve(Z, F))
        except np.linalg.LinAlgError:
            out[i] = np.nan
            poles[i] = True
    return FrfCurve(f, out, poles)


# --------------------------------------------------------------------------
# time domain
# --------------------------------------------------------------------------

def state_space(reduced: ReducedModel) -> tuple[np.ndarray, np.ndarray]:
    """``y = [eta, eta', v]``, ``y' = A y + b a_b``."""
    K = reduced.n_modes
    A = np.zeros((2 * K + 1, 2 * K + 1))
    A[:K, K:2 * K] = np.eye(K)
    A[K:2 * K, :K] = -np.diag(reduced.omega ** 2)
    A[K:2 * K, K:2 * K] = -np.diag(2.0 * reduced.zeta * reduced.omega)
    A[K:2 * K, 2 * K] = reduced.theta
    A[2 * K, K:2 * K] = -reduced.theta / reduced.C_p
    A[2 * K, 2 * K] = -1.0 / (reduced.R_l * reduced.C_p)
    b = np.zeros(2 * K + 1)
    b[K:2 * K] = reduced.force
    return A, b


def energy_from_voltage(v, dt: float, R_l: float) -> float:
    """Trapezoidal integral of ``v^2 / R_l``."""
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return 0.0
    p = v * v
    return float(dt * (p.sum() - 0.5 * (p[0] + p[-1])) / R_l)


@dataclass
class SimResult:
    time: np.ndarray
    voltage: np.ndarray
    energy: float
    peak_voltage: float
    final_state: np.ndarray
    window_id: str = ""
    design_hash: str = ""
    stats: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "window_id": self.window_id,
            "design_hash": self.design_hash,
            "energy_J": self.energy,
            "peak_voltage_V": self.peak_voltage,
            "n_samples": int(self.voltage.size),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "voltage_V"])
            for t, v in zip(self.time, self.voltage):
                w.writerow([repr(float(t)), repr(float(v))])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def design_hash(params) -> str:
    doc = json.dumps(params.to_dict() if hasattr(params, "to_dict") else params, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def simulate(reduced: ReducedModel, accel: AccelerationWindow, rtol: float = 1e-6,
             atol: float = 1e-9, initial_state=None, params=None) -> SimResult:
    """Integrate the reduced electromechanical equations over a window.

    Zero initial state unless ``initial_state`` is given (the final state of
    the previous window, when chaining a continuous record).
    """
    f_top = reduced.mode_frequencies_hz[-1]
    if accel.rate < 10.0 * f_top:
        log.warning("sample rate %.1f Hz below 10x the highest retained mode (%.1f Hz)",
                    accel.rate, f_top)
    A, b = state_space(reduced)
    dt = 1.0 / accel.rate
    traj, yend, stats = integrate_sampled(A, b, accel.samples, dt, initial_state, rtol, atol,
                                          record=[2 * reduced.n_modes])
    v = traj[:, 0]
    return SimResult(
        time=accel.start + dt * np.arange(v.size),
        voltage=v,
        energy=energy_from_voltage(v, dt, reduced.R_l),
        peak_voltage=float(np.max(np.abs(v))) if v.size else 0.0,
        final_state=yend,
        window_id=accel.window_id,
        design_hash=design_hash(params) if params is not None else "",
        stats=stats,
    )


# --------------------------------------------------------------------------
# spectral surrogate
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerSpectrum:
    """One-sided discrete power of a window, ``sum(power) = dt * sum(a^2)``.

    With bins merged, ``frequencies`` are power-weighted bin centroids.
    """

    frequencies: np.ndarray
    power: np.ndarray


def window_power(accel: AccelerationWindow, bin_hz: float | None = 0.01) -> PowerSpectrum:
    a = np.asarray(accel.samples, dtype=float)
    n = a.size
    dt = 1.0 / accel.rate
    if n == 0:
        return PowerSpectrum(np.zeros(0), np.zeros(0))
    X = np.fft.rfft(a)
    f = np.fft.rfftfreq(n, dt)
    wgt = np.full(f.size, 2.0)
    wgt[0] = 1.0
    if n % 2 == 0:
        wgt[-1] = 1.0
    power = dt / n * wgt * np.abs(X) ** 2
    if bin_hz is None or f.size < 2 or bin_hz <= f[1]:
        return PowerSpectrum(f, power)
    idx = np.floor(f / bin_hz + 0.5).astype(np.int64)
    tot = np.bincount(idx, weights=power)
    fw = np.bincount(idx, weights=power * f)
    cnt = np.bincount(idx)
    keep = cnt > 0
    nominal = np.arange(tot.size) * bin_hz
    centre = np.where(tot > 0, fw / np.where(tot > 0, tot, 1.0), nominal)
    return PowerSpectrum(centre[keep], tot[keep])


def energy_from_spectrum(reduced: ReducedModel, spectrum: PowerSpectrum) -> float:
    H = frf(reduced, spectrum.frequencies).values
    H = np.where(np.isfinite(H), H, 0.0)
    return float(np.sum(np.abs(H) ** 2 * spectrum.power) / reduced.R_l)


def energy_spectral(reduced: ReducedModel, accel: AccelerationWindow, bin_hz: float | None = None) -> float:
    """Steady-state energy through the load from the window's spectrum.

    Discrete Parseval on the FFT of the window: each frequency line is
    treated as a stationary harmonic, so start-up transients are ignored.
    ``bin_hz`` merges neighbouring lines (power-weighted) to cut cost on
    long windows.
    """
    return energy_from_spectrum(reduced, window_power(accel, bin_hz))
