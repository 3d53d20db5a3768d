"""Run configuration: a flat JSON object.

Units: lengths (``radius``, ``delta``, ``outer_radius``, ``static_lambda``,
``lambda_threshold``, ``fit_lambda_max``/``min``) are in the same radial unit;
times (``t_max``, ``t_est``, ``snapshot_times``) in the same unit since the
wave speed is one. ``amplitude`` is an angle in radians.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .evolver import BOUNDARY_FLAVORS, SchemeParams

INITIAL_KINDS = ("pulse", "static", "linear")
PULSE_FIELDS = ("amplitude", "radius", "delta")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SimConfig:
    amplitude: float = None
    radius: float = None
    delta: float = None
    initial: str = "pulse"
    static_lambda: float = 1.0
    static_sign: int = 1
    linear_slope: float = 0.0
    outer_radius: float = 32.0
    base_points: int = 1024
    courant: float = 0.5
    tolerance: float = 0.2
    boundary: str = "sommerfeld_2d"
    max_depth: int = 20
    t_max: float = 4.0
    lambda_threshold: float = None
    growth_factor: float = 4.0
    bounce_persistence: float = 1.0
    scale_floor: float = 1e-8
    diag_cadence: int = 4
    eta_max: float = 10.0
    t_est: float = None
    fit_lambda_max: float = None
    fit_lambda_min: float = None
    snapshot_times: tuple = field(default_factory=tuple)
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(self.snapshot_times))
        self.validate()

    def validate(self):
        if self.initial not in INITIAL_KINDS:
            raise ConfigError("initial", f"must be one of {INITIAL_KINDS}")
        if self.initial == "pulse":
            for name in PULSE_FIELDS:
                if getattr(self, name) is None:
                    raise ConfigError(name, "required for pulse initial data")
            if not self.radius > 0:
                raise ConfigError("radius", "must be positive")
            if not self.delta > 0:
                raise ConfigError("delta", "must be positive")
        positive = ("outer_radius", "t_max", "growth_factor", "scale_floor", "eta_max",
                    "static_lambda")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if self.static_sign not in (1, -1):
            raise ConfigError("static_sign", "must be +1 or -1")
        if int(self.base_points) != self.base_points or self.base_points < 16 \
                or self.base_points % 2:
            raise ConfigError("base_points", "must be an even integer >= 16")
        if not 0 < self.courant <= 1:
            raise ConfigError("courant", "must lie in (0, 1]")
        if not self.tolerance > 0:
            raise ConfigError("tolerance", "must be positive")
        if self.boundary not in BOUNDARY_FLAVORS:
            raise ConfigError("boundary", f"must be one of {BOUNDARY_FLAVORS}")
        if int(self.max_depth) != self.max_depth or self.max_depth < 0:
            raise ConfigError("max_depth", "must be a non-negative integer")
        if int(self.diag_cadence) != self.diag_cadence or self.diag_cadence < 1:
            raise ConfigError("diag_cadence", "must be a positive integer")
        if self.bounce_persistence < 0:
            raise ConfigError("bounce_persistence", "must be non-negative")
        for name in ("lambda_threshold", "fit_lambda_max", "fit_lambda_min", "t_est"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(name, "must be positive when given")

    @property
    def scheme(self):
        return SchemeParams(self.courant, self.tolerance, self.boundary)

    @property
    def base_spacing(self):
        return self.outer_radius / self.base_points

    @property
    def dt0(self):
        return self.courant * self.base_spacing

    @property
    def blowup_threshold(self):
        if self.lambda_threshold is not None:
            return self.lambda_threshold
        return 10.0 * self.base_spacing / 2 ** self.max_depth

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d

    def config_hash(self):
        """Short SHA-256 of the physics-relevant fields (``output_dir`` excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("<file>", "top level must be a JSON object")
        return cls.from_dict(data)

    def write_json(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def parse_override(text):
    """Split ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(text, "override must have the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
