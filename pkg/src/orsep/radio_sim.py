"""Geometric cognitive-radio scenarios and the linear received-power model.

All stored powers are milliwatts. Received power from PU ``j`` at monitor
``i`` is ``gain_const * d_ij**-alpha * tx_power_j`` times a fading factor.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from orsep.binmat import BinaryMatrix
from orsep.errors import DimensionError, InfeasibilityError, ParameterError
from orsep.mixture import MixingMatrix

# Reference path gain giving a ~150 m detection radius at 20 mW, alpha=3
# and a -90 dBm threshold.
DEFAULT_GAIN_CONST = 1.7e-4
MIN_DISTANCE = 1.0  # meters; keeps co-located links finite


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass(frozen=True)
class ScenarioParams:
    m: int = 10
    n: int = 5
    area: float = 500.0
    tx_power: float = 20.0
    noise_floor: float = -95.0
    alpha: float = 3.0
    threshold: float = 5.0
    gain_const: float = DEFAULT_GAIN_CONST
    max_tries: int = 200
    pu_tries: int = 2000


@dataclass(frozen=True)
class Scenario:
    area: float
    monitors: np.ndarray
    pus: np.ndarray
    tx_power: np.ndarray
    noise_floor: float = -95.0
    alpha: float = 3.0
    threshold: float = 5.0
    gain_const: float = DEFAULT_GAIN_CONST
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        mon = np.asarray(self.monitors, dtype=float).reshape(-1, 2)
        pus = np.asarray(self.pus, dtype=float).reshape(-1, 2)
        tx = np.broadcast_to(np.asarray(self.tx_power, dtype=float), (pus.shape[0],)).copy()
        for name, pos in (("monitor", mon), ("PU", pus)):
            if ((pos < 0) | (pos > self.area)).any():
                raise ParameterError(f"{name} position outside [0, {self.area}]^2")
        if self.alpha <= 0:
            raise ParameterError("alpha must be positive")
        if (tx <= 0).any():
            raise ParameterError("transmit power must be positive")
        object.__setattr__(self, "monitors", mon)
        object.__setattr__(self, "pus", pus)
        object.__setattr__(self, "tx_power", tx)

    @property
    def m(self) -> int:
        return self.monitors.shape[0]

    @property
    def n(self) -> int:
        return self.pus.shape[0]

    @property
    def tau(self) -> float:
        """Detection threshold in mW: noise floor plus ``threshold`` dB."""
        return float(dbm_to_mw(self.noise_floor + self.threshold))

    @property
    def noise_mw(self) -> float:
        return float(dbm_to_mw(self.noise_floor))

    def distances(self) -> np.ndarray:
        diff = self.monitors[:, None, :] - self.pus[None, :, :]
        return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), MIN_DISTANCE)

    def path_gain(self) -> np.ndarray:
        return self.gain_const * self.distances() ** (-self.alpha)

    def mean_power(self) -> np.ndarray:
        """Expected received power (no fading, no noise) of each PU alone, ``m x n``."""
        return self.path_gain() * self.tx_power[None, :]

    def detection_radius(self) -> np.ndarray:
        return (self.gain_const * self.tx_power / self.tau) ** (1.0 / self.alpha)

    def to_json(self) -> dict:
        return {
            "area": self.area,
            "monitors": self.monitors.tolist(),
            "pus": self.pus.tolist(),
            "tx_power": self.tx_power.tolist(),
            "noise_floor": self.noise_floor,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "gain_const": self.gain_const,
        }

    @classmethod
    def from_json(cls, doc: dict) -> Scenario:
        return cls(
            area=float(doc["area"]),
            monitors=np.asarray(doc["monitors"], dtype=float).reshape(-1, 2),
            pus=np.asarray(doc["pus"], dtype=float).reshape(-1, 2),
            tx_power=np.asarray(doc["tx_power"], dtype=float),
            noise_floor=float(doc["noise_floor"]),
            alpha=float(doc["alpha"]),
            threshold=float(doc["threshold"]),
            gain_const=float(doc["gain_const"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> Scenario:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def generate_scenario(params: ScenarioParams | None = None, seed=0, **overrides) -> Scenario:
    """Uniform placement, PUs resampled until every column is nonzero and distinct.

    Monitors are placed first; each PU is then drawn until it is seen by a
    monitor set no earlier PU has. After ``pu_tries`` failures the monitors
    are redrawn, up to ``max_tries`` times.
    """
    params = params or ScenarioParams()
    if overrides:
        params = ScenarioParams(**{**asdict(params), **overrides})
    m, n = params.m, params.n
    if m < 1 or n < 0:
        raise ParameterError(f"need m >= 1 and n >= 0, got m={m}, n={n}")
    if n > (1 << m) - 1:
        raise InfeasibilityError(
            f"distinct nonzero columns: {n} PUs cannot have distinct monitor sets "
            f"among the {(1 << m) - 1} nonempty subsets of {m} monitors"
        )
    rng = np.random.default_rng(seed)
    tau = float(dbm_to_mw(params.noise_floor + params.threshold))
    weights = 1 << np.arange(m)
    for _ in range(params.max_tries):
        monitors = rng.uniform(0.0, params.area, size=(m, 2))
        pus = np.empty((n, 2))
        used: set[int] = set()
        ok = True
        for j in range(n):
            for _ in range(params.pu_tries):
                pos = rng.uniform(0.0, params.area, size=2)
                d = np.maximum(np.hypot(*(monitors - pos).T), MIN_DISTANCE)
                col = detectable(params.gain_const * params.tx_power * d ** (-params.alpha), tau)
                s = int(weights @ col)
                if s and s not in used:
                    used.add(s)
                    pus[j] = pos
                    break
            else:
                ok = False
                break
        if ok:
            return Scenario(params.area, monitors, pus, params.tx_power, params.noise_floor,
                            params.alpha, params.threshold, params.gain_const)
    raise InfeasibilityError(
        f"distinct nonzero columns: could not place {n} PUs with distinct visible "
        f"monitor sets among {m} monitors in {params.max_tries} attempts"
    )


def detectable(power, tau):
    """Whether a lone PU's mean received power (no fading, no noise) exceeds ``tau``."""
    return np.asarray(power) > tau


def derive_mixing_matrix(sc: Scenario) -> MixingMatrix:
    return MixingMatrix(detectable(sc.mean_power(), sc.tau).astype(np.uint8))


def simulate_linear(sc: Scenario, y, fading: str = "rayleigh", seed=0, noise_std: float = 0.0) -> np.ndarray:
    """Received power ``v = H z + n`` per slot, ``m x T`` in mW.

    Rayleigh fading multiplies each link's power by an i.i.d. unit-mean
    exponential per slot. Noise has mean equal to the noise floor and an
    optional Gaussian spread ``noise_std`` (relative to that mean), truncated
    at zero.
    """
    ya = np.asarray(y, dtype=float)
    if ya.ndim != 2 or ya.shape[0] != sc.n:
        raise DimensionError(f"activity matrix must be {sc.n} x T, got {ya.shape}")
    if fading not in ("rayleigh", "none"):
        raise ParameterError(f"unknown fading model {fading!r}")
    rng = np.random.default_rng(seed)
    T = ya.shape[1]
    mean = sc.mean_power()
    if fading == "none":
        v = mean @ ya
    else:
        v = np.zeros((sc.m, T))
        for j in range(sc.n):
            active = ya[j] > 0
            fade = rng.exponential(1.0, size=(sc.m, T))
            v += mean[:, j:j + 1] * fade * active
    noise = np.full((sc.m, T), sc.noise_mw)
    if noise_std > 0:
        noise = np.maximum(noise + rng.normal(0.0, noise_std * sc.noise_mw, size=noise.shape), 0.0)
    return v + noise


def quantize(v, tau: float) -> BinaryMatrix:
    if tau <= 0:
        raise ParameterError("threshold power must be positive")
    return BinaryMatrix((np.asarray(v, dtype=float) > tau).astype(np.uint8))


def compare_models(x_or, x_lin) -> dict[str, float | None]:
    """False-alarm and miss rates of ``x_or`` taking ``x_lin`` as ground truth.

    A rate whose conditioning set is empty is reported as ``None``.
    """
    a = np.asarray(x_or, dtype=bool)
    b = np.asarray(x_lin, dtype=bool)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    neg = int((~b).sum())
    pos = int(b.sum())
    fa = float((a & ~b).sum() / neg) if neg else None
    miss = float((~a & b).sum() / pos) if pos else None
    return {"false_alarm_rate": fa, "miss_rate": miss}
