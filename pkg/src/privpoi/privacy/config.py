import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

from privpoi.core.utils.errors import ConfigError

log = logging.getLogger('privpoi')

__all__ = [
    'PrivacyConfig',
    'DEFAULT_DISTANCE_BINS',
]

DEFAULT_DISTANCE_BINS = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


@dataclass(frozen=True)
class PrivacyConfig:
    """Privacy budget and mechanism parameters.

    The same `epsilon` is handed to every mechanism invocation. When `flip_p`
    and `flip_q` are omitted they default to randomized response,
    p = e^eps / (e^eps + 1) and q = 1 / (e^eps + 1).

    Parameters
    ----------
    epsilon
        Per-mechanism privacy budget, > 0.
    flip_p
        Probability an existing social link is kept.
    flip_q
        Probability a missing social link is created.
    h_min, h_max
        Range of the POI count h drawn for each fuzzification.
    radius_bounds
        Clamp (km) applied to the h-nearest radius.
    distance_bins
        Strictly increasing bucket edges (km) for distance tokens.
    max_retries
        Fresh (offset, bearing) draws allowed when a fuzzification circle is empty.
    laplace_sensitivity
        Sensitivity of the check-in distributions.
    oue_resample_empty
        Redraw an OUE vector that came out all zero before decoding.
    """
    epsilon: float = 0.1
    flip_p: Optional[float] = None
    flip_q: Optional[float] = None
    h_min: int = 5
    h_max: int = 20
    radius_bounds: tuple[float, float] = (10.0, 30.0)
    distance_bins: tuple[float, ...] = field(default=DEFAULT_DISTANCE_BINS)
    max_retries: int = 16
    laplace_sensitivity: float = 1.0
    oue_resample_empty: bool = True

    def __post_init__(self) -> None:
        if not self.epsilon > 0 or math.isinf(self.epsilon):
            raise ConfigError(f"epsilon must be a positive finite number, got {self.epsilon}")

        # Randomized response defaults, written with exp(-eps) to stay finite.
        tail = math.exp(-self.epsilon)
        if self.flip_p is None:
            object.__setattr__(self, 'flip_p', 1.0 / (1.0 + tail))
        if self.flip_q is None:
            object.__setattr__(self, 'flip_q', tail / (1.0 + tail))
        object.__setattr__(self, 'radius_bounds', tuple(float(b) for b in self.radius_bounds))
        object.__setattr__(self, 'distance_bins', tuple(float(b) for b in self.distance_bins))

        p, q = self.flip_p, self.flip_q
        if p == 1.0 and q == 0.0:
            log.warning("Social flipping configured as identity (p=1, q=0): links are not private")
        elif not 0.0 < q <= p <= 1.0:
            raise ConfigError(f"Need 0 < flip_q <= flip_p <= 1, got p={p}, q={q}")
        elif p / q > math.exp(self.epsilon) * (1.0 + 1e-9):
            raise ConfigError(
                f"flip_p / flip_q = {p / q:.6g} exceeds e^epsilon = {math.exp(self.epsilon):.6g}",
            )

        if self.h_min < 1 or self.h_min > self.h_max:
            raise ConfigError(f"Need 1 <= h_min <= h_max, got {self.h_min}, {self.h_max}")
        lo, hi = self.radius_bounds
        if not 0 < lo <= hi:
            raise ConfigError(f"Invalid radius bounds {self.radius_bounds}")
        bins = self.distance_bins
        if not bins or bins[0] <= 0 or any(b >= c for b, c in zip(bins, bins[1:])):
            raise ConfigError(f"distance_bins must be positive and strictly increasing: {bins}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.laplace_sensitivity <= 0:
            raise ConfigError("laplace_sensitivity must be positive")

    @classmethod
    def from_dict(cls, config: Optional[dict[str, Any]] = None) -> 'PrivacyConfig':
        """Build from a plain dict; unknown keys are ignored."""
        if config is None:
            return cls()
        names = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in dict(config).items() if k in names and v is not None}
        for key in ('radius_bounds', 'distance_bins'):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out['radius_bounds'] = list(self.radius_bounds)
        out['distance_bins'] = list(self.distance_bins)
        return out

    def with_epsilon(self, epsilon: float) -> 'PrivacyConfig':
        """Copy with a new budget; randomized-response flips are re-derived."""
        data = self.to_dict()
        data['epsilon'] = epsilon
        rr_p = 1.0 / (1.0 + math.exp(-self.epsilon))
        if math.isclose(self.flip_p, rr_p) and math.isclose(
            self.flip_q, math.exp(-self.epsilon) / (1.0 + math.exp(-self.epsilon)),
        ):
            data['flip_p'] = None
            data['flip_q'] = None
        return PrivacyConfig.from_dict(data)
