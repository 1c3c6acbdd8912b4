"""Base-acceleration windows: recorded CSV data or a synthetic bridge deck.

The synthetic deck is a set of modal oscillators driven by vehicles
crossing at constant speed. Each vehicle is a moving point load whose
magnitude fluctuates around its static value (road-roughness interaction),
projected onto every mode through the mode shape at its current position.
"""
from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigError, DataError, DataFormatError

log = logging.getLogger(__name__)

COUNT_THRESHOLD = 0.2  # m/s^2
MERGE_GAP = 2.0        # s


@dataclass
class AccelerationWindow:
    samples: np.ndarray
    rate: float
    location: str = ""
    start: float = 0.0
    window_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.rate > 0:
            raise ValueError(f"sample rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(self.samples)):
            bad = int(np.flatnonzero(~np.isfinite(self.samples))[0])
            raise DataError(bad + 1)
        if not self.window_id:
            self.window_id = f"{self.location}@{self.start:g}"

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    def times(self) -> np.ndarray:
        return self.start + np.arange(self.samples.size) / self.rate

    def scaled(self, factor: float) -> "AccelerationWindow":
        return AccelerationWindow(self.samples * factor, self.rate, self.location, self.start,
                                  self.window_id)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times(), self.samples])
        np.savetxt(path, data, delimiter=",", header="time_s,accel_ms2", comments="",
                   fmt="%.9g")


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

_RATE_RE = re.compile(r"sample_rate_hz\s*[:=,]\s*([0-9.eE+-]+)")


def ingest_csv(path, location: str, window_s: float = 3600.0, jitter: float = 1e-6):
    """Cut a recorded acceleration file into fixed-length windows.

    Accepts a ``time_s,accel_ms2`` header, or an ``accel_ms2`` column
    preceded by a ``# sample_rate_hz=<f>`` metadata line. A trailing partial
    window is dropped.
    """
    path = Path(path)
    rate = None
    header = None
    skip = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if not text:
                skip += 1
                continue
            m = _RATE_RE.search(text)
            if m and (text.startswith("#") or text.startswith("sample_rate_hz")):
                rate = float(m.group(1))
                skip += 1
                continue
            if text.startswith("#"):
                skip += 1
                continue
            header = [h.strip() for h in text.split(",")]
            skip += 1
            break
    if header is None:
        raise DataFormatError(f"{path}: no header line")
    if "accel_ms2" not in header:
        raise DataFormatError(f"{path}: header must contain accel_ms2, got {header}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise DataFormatError(f"{path}: {data.shape[1]} columns but header has {len(header)}")
    accel = data[:, header.index("accel_ms2")]
    bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
    if bad.size:
        raise DataError(int(bad[0]) + 1, f"{path}: non-finite value")

    t0 = 0.0
    if "time_s" in header:
        t = data[:, header.index("time_s")]
        if t.size >= 2:
            if np.any(np.diff(t) <= 0):
                raise DataFormatError(f"{path}: time column is not strictly increasing")
            dt = (t[-1] - t[0]) / (t.size - 1)
            dev = np.abs(t - (t[0] + dt * np.arange(t.size)))
            if dev.max() > jitter:
                row = int(np.argmax(dev)) + 1
                raise DataFormatError(f"{path}: non-uniform sampling near row {row} "
                                      f"({dev.max():.3g} s off the grid)")
            file_rate = 1.0 / dt
            if rate is not None and abs(file_rate - rate) > 1e-6 * rate:
                raise DataFormatError(f"{path}: metadata rate {rate} disagrees with time column")
            rate = file_rate
        t0 = float(t[0]) if t.size else 0.0
    if rate is None:
        raise DataFormatError(f"{path}: no time_s column and no sample_rate_hz metadata")

    n_per = int(round(window_s * rate))
    n_win = accel.size // n_per if n_per > 0 else 0
    if n_win == 0:
        log.warning("%s: %.1f s of data is shorter than one %.0f s window", path,
                    accel.size / rate, window_s)
    return [
        AccelerationWindow(accel[k * n_per:(k + 1) * n_per].copy(), rate, location,
                           t0 + k * window_s, f"{location}/w{k:02d}")
        for k in range(n_win)
    ]


# --------------------------------------------------------------------------
# bridge and traffic
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BridgeModel:
    """Modal model of the deck along its span.

    ``sensors`` maps location ids to positions along the span [m]. Mode
    shapes default to ``sin(m pi x / span)``; ``mode_table`` overrides the
    ordinates at named sensors. ``amplitude_damping`` raises each mode's
    damping with its RMS modal displacement [m],
    ``zeta_m = zeta_m0 * (1 + amplitude_damping * rms_m)``.
    """

    span: float = 46.0
    frequencies: tuple = (2.01, 3.51)
    damping: tuple = (0.02, 0.02)
    modal_mass: float = 69000.0
    sensors: dict = field(default_factory=lambda: {"mid": 23.0, "quarter": 11.5, "support": 4.6})
    mode_table: dict = field(default_factory=dict)
    amplitude_damping: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if f.size < 1 or np.any(np.diff(f) <= 0) or np.any(f <= 0):
            raise ConfigError("bridge frequencies must be positive and ascending")
        if len(self.damping) != f.size:
            raise ConfigError("one damping ratio per bridge mode is required")
        if self.span <= 0 or self.modal_mass <= 0:
            raise ConfigError("span and modal mass must be positive")
        for loc, row in self.mode_table.items():
            if len(row) != f.size or np.any(np.abs(row) > 1.0 + 1e-12):
                raise ConfigError(f"mode_table[{loc}] needs {f.size} ordinates with |phi| <= 1")

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def shape_at(self, x) -> np.ndarray:
        """Ordinates of every mode at positions ``x``; shape (n_modes, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = np.arange(1, self.n_modes + 1)[:, None]
        return np.sin(m * np.pi * x[None, :] / self.span)

    def sensor_shape(self, location: str) -> np.ndarray:
        if location in self.mode_table:
            return np.asarray(self.mode_table[location], dtype=float)
        if location not in self.sensors:
            raise ConfigError(f"unknown sensor location {location!r}")
        return self.shape_at(self.sensors[location])[:, 0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frequencies"] = list(self.frequencies)
        d["damping"] = list(self.damping)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "BridgeModel":
        doc = dict(doc)
        for key in ("frequencies", "damping"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad bridge document: {exc}") from exc


@dataclass(frozen=True)
class TrafficSpec:
    """Poisson traffic for one window.

    ``dynamic_factor`` is the RMS of the fluctuating axle force relative to
    the static load, band-limited to ``force_band`` [Hz].
    """

    rate_per_hour: float = 10.0
    speed_range: tuple = (10.0, 25.0)
    load_range: tuple = (6e4, 3e5)
    seed: int = 0
    dynamic_factor: float = 0.1
    force_band: tuple = (0.5, 25.0)
    noise_rms: float = 0.005

    def __post_init__(self):
        if self.rate_per_hour < 0:
            raise ConfigError("arrival rate must be non-negative")
        for name in ("speed_range", "load_range", "force_band"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must be a positive (low, high) pair")
        if self.noise_rms < 0 or self.dynamic_factor < 0:
            raise ConfigError("noise and dynamic factor must be non-negative")

    def with_seed(self, seed: int) -> "TrafficSpec":
        return TrafficSpec(self.rate_per_hour, self.speed_range, self.load_range, int(seed),
                           self.dynamic_factor, self.force_band, self.noise_rms)

    def with_rate(self, rate: float) -> "TrafficSpec":
        return TrafficSpec(float(rate), self.speed_range, self.load_range, self.seed,
                           self.dynamic_factor, self.force_band, self.noise_rms)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("speed_range", "load_range", "force_band"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TrafficSpec":
        doc = dict(doc)
        for key in ("speed_range", "load_range", "force_band"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad traffic document: {exc}") from exc


@dataclass(frozen=True)
class Vehicle:
    arrival: float
    speed: float
    load: float


def draw_vehicles(traffic: TrafficSpec, duration: float, rng) -> list[Vehicle]:
    if traffic.rate_per_hour == 0:
        return []
    lam = traffic.rate_per_hour / 3600.0
    out = []
    t = rng.exponential(1.0 / lam)
    while t < duration:
        out.append(Vehicle(t, rng.uniform(*traffic.speed_range), rng.uniform(*traffic.load_range)))
        t += rng.exponential(1.0 / lam)
    return out


def _modal_accel_filter(freq_hz: float, zeta: float, dt: float):
    """Exact discrete map from sampled (linearly interpolated) modal force
    per unit mass to modal acceleration of ``q'' + 2 z w q' + w^2 q = f``."""
    w = 2.0 * np.pi * freq_hz
    A = np.array([[0.0, 1.0], [-w * w, -2.0 * zeta * w]])
    B = np.array([[0.0], [1.0]])
    C = np.array([[-w * w, -2.0 * zeta * w]])
    D = np.array([[1.0]])
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete((A, B, C, D), dt, method="foh")
    num, den = signal.ss2tf(Ad, Bd, Cd, Dd)
    return num[0], den


def _modal_forces(bridge: BridgeModel, traffic: TrafficSpec, vehicles, n: int, rate: float, rng):
    dt = 1.0 / rate
    forces = np.zeros((bridge.n_modes, n))
    lo, hi = traffic.force_band
    hi = min(hi, 0.45 * rate)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=rate, output="sos") if hi > lo else None
    for v in vehicles:
        t_cross = bridge.span / v.speed
        i0 = int(np.ceil(v.arrival * rate))
        i1 = min(n, int(np.floor((v.arrival + t_cross) * rate)) + 1)
        if i1 <= i0:
            continue
        t = np.arange(i0, i1) * dt
        x = v.speed * (t - v.arrival)
        load = np.full(t.size, v.load)
        if sos is not None and traffic.dynamic_factor > 0:
            # pad so the filter transient settles before the vehicle enters
            pad = int(2.0 * rate / lo)
            r = signal.sosfilt(sos, rng.standard_normal(t.size + pad))[pad:]
            std = r.std()
            if std > 0:
                load = load * (1.0 + traffic.dynamic_factor * r / std)
        forces[:, i0:i1] += bridge.shape_at(x) * load[None, :]
    return forces / bridge.modal_mass


def _modal_accelerations(bridge: BridgeModel, forces: np.ndarray, rate: float, zetas) -> np.ndarray:
    out = np.empty_like(forces)
    for m in range(bridge.n_modes):
        num, den = _modal_accel_filter(bridge.frequencies[m], zetas[m], 1.0 / rate)
        out[m] = signal.lfilter(num, den, forces[m])
    return out


def synthesize(bridge: BridgeModel, traffic: TrafficSpec, location: str, duration: float,
               rate: float = 600.0, start: float = 0.0, window_id: str = "",
               return_vehicles: bool = False):
    """Sensor acceleration under seeded Poisson traffic; zero initial state."""
    phi_s = bridge.sensor_shape(location)
    rng = np.random.default_rng(traffic.seed)
    n = int(round(duration * rate))
    vehicles = draw_vehicles(traffic, duration, rng)
    forces = _modal_forces(bridge, traffic, vehicles, n, rate, rng)
    zetas = np.asarray(bridge.damping, dtype=float)
    qdd = _modal_accelerations(bridge, forces, rate, zetas)
    if bridge.amplitude_damping > 0 and vehicles:
        # modal displacement RMS estimated from the narrow-band acceleration
        w = 2.0 * np.pi * np.asarray(bridge.frequencies, dtype=float)
        rms = np.sqrt(np.mean(qdd ** 2, axis=1)) / w ** 2
        zetas = zetas * (1.0 + bridge.amplitude_damping * rms)
        qdd = _modal_accelerations(bridge, forces, rate, zetas)
    accel = phi_s @ qdd + traffic.noise_rms * rng.standard_normal(n)
    win = AccelerationWindow(accel, rate, location, start, window_id)
    if return_vehicles:
        return win, vehicles
    return win


def tone_window(freqs, amps, duration: float, rate: float, location: str = "synthetic",
                start: float = 0.0, window_id: str = "") -> AccelerationWindow:
    """Sum of cosines, handy for tuning studies."""
    t = np.arange(int(round(duration * rate))) / rate
    a = np.zeros_like(t)
    for f, A in zip(np.atleast_1d(freqs), np.atleast_1d(amps)):
        a += A * np.sin(2.0 * np.pi * f * t)
    return AccelerationWindow(a, rate, location, start, window_id)


# --------------------------------------------------------------------------
# traffic analysis
# --------------------------------------------------------------------------

def count_vehicles(window: AccelerationWindow, threshold: float = COUNT_THRESHOLD,
                   merge_gap: float = MERGE_GAP) -> int:
    """Number of threshold-exceedance bursts; bursts closer than
    ``merge_gap`` seconds are one vehicle."""
    idx = np.flatnonzero(np.abs(window.samples) > threshold)
    if idx.size == 0:
        return 0
    gaps = np.diff(idx) / window.rate
    return int(1 + np.count_nonzero(gaps >= merge_gap))


class TrafficClass(str, enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


def classify_traffic(count_per_hour: float) -> TrafficClass:
    if count_per_hour < 0:
        raise ValueError("vehicle count must be non-negative")
    if count_per_hour <= 10:
        return TrafficClass.LOW
    if count_per_hour <= 20:
        return TrafficClass.MEDIUM
    return TrafficClass.HIGH


def spectrum(window: AccelerationWindow) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann-windowed amplitude spectrum; a unit tone reads 1.0."""
    a = window.samples
    if a.size < 2:
        raise ValueError("spectrum needs at least two samples")
    w = np.hanning(a.size + 1)[:-1]  # periodic Hann: exact bin-centred gain
    X = np.fft.rfft(a * w)
    amp = np.abs(X) / w.sum()
    amp[1:] *= 2.0
    if a.size % 2 == 0:
        amp[-1] /= 2.0
    return np.fft.rfftfreq(a.size, 1.0 / window.rate), amp


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
