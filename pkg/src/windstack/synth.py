"""Synthetic wind-farm data generation.

Produces records in the exact CSV schema the ingest module reads, by
sampling weather from a mixture of named regimes and pushing it through
an idealized turbine power curve. The point is not meteorological
realism but controllable cluster structure: each regime concentrates in
a different part of feature space, and the power map reacts to
turbulence differently at low and high speed, so clustering genuinely
helps a downstream regressor.

Power curve: zero below cut-in and above cut-off, 0.5*cp*rho*A*v^3
between cut-in and rated (converted W -> kW by /1000, capped at rated
power since the controller pitches out excess), flat at rated power
from rated speed to cut-off. Air density follows the ideal-gas relation
rho = pressure*100 / (287.05 * (temp + 273.15)).

Turbulence couples in through a multiplier (1 + adj): adj = +alpha*I in
the lower half of the cubic band (gusts push a sluggish rotor harder),
-alpha*I in the band approaching cut-off (gusts trip the controller),
zero elsewhere. On top of that sits bounded relative noise drawn
uniformly from [-noise_frac, +noise_frac], so generated power stays
inside provable bounds.
"""

from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .errors import InvalidConfig
from .ingest import turbulence_intensity
from .rng import derive_seed, make_rng

GAS_CONSTANT = 287.05  # J/(kg*K), dry air
BETZ_LIMIT = 0.593
_CHUNK = 8192


@dataclass(frozen=True)
class TurbineSpec:
    """Aggregate turbine parameters for the power curve."""

    cp: float = 0.4
    rho0: float = 1.225
    area: float = 2000.0
    v_min: float = 3.0
    v_n: float = 12.0
    v_max: float = 25.0
    p_n: float = 846.72

    def validate(self):
        if not 0 < self.v_min < self.v_n < self.v_max:
            raise InvalidConfig(
                "need 0 < v_min < v_n < v_max, got "
                f"{self.v_min}, {self.v_n}, {self.v_max}")
        if self.p_n <= 0:
            raise InvalidConfig(f"p_n must be positive, got {self.p_n}")
        if not 0 < self.cp <= BETZ_LIMIT:
            raise InvalidConfig(
                f"cp must be in (0, {BETZ_LIMIT}], got {self.cp}")
        if self.area <= 0 or self.rho0 <= 0:
            raise InvalidConfig("area and rho0 must be positive")


@dataclass(frozen=True)
class RegimeSpec:
    """One weather regime of the mixture."""

    label: str
    mixing_weight: float
    speed_mean: float
    speed_std: float
    dir_mean: float
    dir_std: float
    temp_mean: float
    temp_std: float
    pressure_mean: float
    pressure_std: float
    turbulence_scale: float


def default_regimes():
    return (
        RegimeSpec("westerly", 0.5, 7.0, 2.5, 200.0, 15.0,
                   8.0, 4.0, 1010.0, 8.0, 0.10),
        RegimeSpec("storm", 0.3, 11.0, 3.0, 320.0, 20.0,
                   4.0, 5.0, 1000.0, 10.0, 0.14),
        RegimeSpec("calm", 0.2, 4.0, 1.8, 90.0, 25.0,
                   12.0, 5.0, 1018.0, 6.0, 0.07),
    )


@dataclass
class SynthConfig:
    n_records: int = 5000
    seed: int = 20190101
    start_time: datetime = field(
        default_factory=lambda: datetime(2019, 1, 1))
    noise_frac: float = 0.05
    turbulence_alpha: float = 0.2
    speed_dist: str = "truncated_normal"
    turbine: TurbineSpec = field(default_factory=TurbineSpec)
    regimes: tuple = field(default_factory=default_regimes)

    def validate(self):
        if self.n_records <= 0:
            raise InvalidConfig(f"n_records must be > 0, got {self.n_records}")
        if self.noise_frac < 0:
            raise InvalidConfig(
                f"noise_frac must be >= 0, got {self.noise_frac}")
        if self.turbulence_alpha < 0:
            raise InvalidConfig("turbulence_alpha must be >= 0")
        if self.speed_dist not in ("truncated_normal", "weibull"):
            raise InvalidConfig(f"unknown speed_dist {self.speed_dist!r}")
        if not self.regimes:
            raise InvalidConfig("need at least one regime")
        weights = [r.mixing_weight for r in self.regimes]
        if any(w < 0 for w in weights):
            raise InvalidConfig("mixing weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidConfig(
                f"mixing weights must sum to 1, got {sum(weights)}")
        for r in self.regimes:
            if r.speed_std < 0 or r.dir_std < 0 or r.turbulence_scale < 0:
                raise InvalidConfig(
                    f"regime {r.label!r} has a negative spread parameter")
        self.turbine.validate()

    def to_dict(self):
        out = asdict(self)
        out["start_time"] = self.start_time.isoformat()
        out["regimes"] = [asdict(r) for r in self.regimes]
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f.name for f in
                               cls.__dataclass_fields__.values()}
        if unknown:
            raise InvalidConfig(f"unknown synth config keys {sorted(unknown)}")
        if "start_time" in data and isinstance(data["start_time"], str):
            data["start_time"] = datetime.fromisoformat(data["start_time"])
        if "turbine" in data and isinstance(data["turbine"], dict):
            data["turbine"] = TurbineSpec(**data["turbine"])
        if "regimes" in data:
            data["regimes"] = tuple(
                RegimeSpec(**r) if isinstance(r, dict) else r
                for r in data["regimes"])
        return cls(**data)


def air_density(pressure_hpa, temp_c):
    """Ideal-gas air density in kg/m^3 from hPa and Celsius."""
    pressure_hpa = np.asarray(pressure_hpa, dtype=float)
    temp_c = np.asarray(temp_c, dtype=float)
    return pressure_hpa * 100.0 / (GAS_CONSTANT * (temp_c + 273.15))


def power_curve(spec, v, rho):
    """Idealized aggregate power curve in kW.

    Zero outside [v_min, v_max]; 0.5*cp*rho*area*v^3 / 1000 (W to kW)
    on [v_min, v_n), capped at p_n since high air density would
    otherwise push the cubic past rated output; p_n flat on
    [v_n, v_max].
    """
    v = np.asarray(v, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), v.shape)
    out = np.zeros_like(v)
    cubic = (v >= spec.v_min) & (v < spec.v_n)
    out[cubic] = np.minimum(
        0.5 * spec.cp * rho[cubic] * spec.area * v[cubic] ** 3 / 1000.0,
        spec.p_n)
    rated = (v >= spec.v_n) & (v <= spec.v_max)
    out[rated] = spec.p_n
    return out


def _weibull_params(mean, std):
    """Moment-match Weibull shape and scale to a target mean and std."""
    cv2 = (std / mean) ** 2

    def gap(k):
        g1 = gamma_fn(1.0 + 1.0 / k)
        g2 = gamma_fn(1.0 + 2.0 / k)
        return g2 / g1 ** 2 - 1.0 - cv2

    shape = brentq(gap, 0.15, 60.0, maxiter=200)
    scale = mean / gamma_fn(1.0 + 1.0 / shape)
    return shape, scale


def _draw_speeds(rng, dist, mu, sd):
    if dist == "weibull":
        out = np.empty_like(mu)
        # group rows by regime parameters, in sorted order so the rng
        # stream does not depend on set iteration order
        for m, s in sorted(set(zip(mu.tolist(), sd.tolist()))):
            mask = (mu == m) & (sd == s)
            shape, scale = _weibull_params(m, s)
            out[mask] = scale * rng.weibull(shape, size=int(mask.sum()))
        return out
    draw = rng.normal(mu, sd)
    bad = draw < 0
    rounds = 0
    while bad.any() and rounds < 100:
        draw[bad] = rng.normal(mu[bad], sd[bad])
        bad = draw < 0
        rounds += 1
    return np.maximum(draw, 0.0)


def _turbulence_adjustment(cfg, v, intensity):
    t = cfg.turbine
    lo_band = (v >= t.v_min) & (v < 0.5 * (t.v_min + t.v_n))
    hi_band = (v >= 0.5 * (t.v_n + t.v_max)) & (v <= t.v_max)
    adj = np.zeros_like(v)
    adj[lo_band] = cfg.turbulence_alpha * intensity[lo_band]
    adj[hi_band] = -cfg.turbulence_alpha * intensity[hi_band]
    return adj


def _generate_chunk(cfg, chunk_seed, size):
    rng = make_rng(chunk_seed)
    regimes = cfg.regimes
    weights = np.array([r.mixing_weight for r in regimes])
    weights = weights / weights.sum()
    labels = rng.choice(len(regimes), size=size, p=weights)

    def reg(attr):
        return np.array([getattr(r, attr) for r in regimes])[labels]

    speed = _draw_speeds(rng, cfg.speed_dist,
                         reg("speed_mean"), reg("speed_std"))
    wind_dir = rng.normal(reg("dir_mean"), reg("dir_std")) % 360.0
    temp = rng.normal(reg("temp_mean"), reg("temp_std"))
    pressure = np.maximum(
        rng.normal(reg("pressure_mean"), reg("pressure_std")), 0.1)
    speed_std = reg("turbulence_scale") * speed
    dir_std = reg("dir_std")

    rho = air_density(pressure, temp)
    base = power_curve(cfg.turbine, speed, rho)
    intensity = turbulence_intensity(speed, speed_std)
    mult = np.maximum(1.0 + _turbulence_adjustment(cfg, speed, intensity), 0.0)
    noise = rng.uniform(-cfg.noise_frac, cfg.noise_frac, size=size)
    power = base * mult * (1.0 + noise)

    return {
        "wind_speed": speed,
        "wind_speed_std": speed_std,
        "wind_dir": wind_dir,
        "wind_dir_std": dir_std,
        "temperature": temp,
        "pressure": pressure,
        "power": power,
    }, labels


def generate_labeled(config):
    """Generate the record batch plus the true regime label per row.

    Labels exist for test oracles only and are never written to CSV.
    Generation runs in fixed-size chunks with per-chunk derived seeds,
    so the output depends only on (config, seed), not on how chunks are
    scheduled.
    """
    config.validate()
    n = config.n_records
    chunks = []
    label_chunks = []
    for c, start in enumerate(range(0, n, _CHUNK)):
        size = min(_CHUNK, n - start)
        chunk, labels = _generate_chunk(
            config, derive_seed(config.seed, "chunk", c), size)
        chunks.append(chunk)
        label_chunks.append(labels)
    raw = {key: np.concatenate([ch[key] for ch in chunks])
           for key in chunks[0]}
    step = timedelta(minutes=10)
    raw["timestamp"] = np.array(
        [config.start_time + i * step for i in range(n)], dtype=object)
    return raw, np.concatenate(label_chunks)


def generate(config):
    """Generate a record batch in the canonical CSV schema (dict form)."""
    return generate_labeled(config)[0]
