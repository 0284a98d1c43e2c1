from collections.abc import Sequence
from typing import Any, Optional

import numpy as np

from privpoi.core.calc.geo import rank_by_distance
from privpoi.data.corpus import EvalInstance


class Dist:
    """Nearest POIs.

    Ranks candidates by haversine distance to the last check-in of the
    context, nearest first.

    Parameters
    ----------
    config
        Unused; accepted for a uniform method interface.
    """
    def __init__(self, config: Optional[dict[str, Any]] = None) -> None:
        self.name = 'Dist'
        self.config = config
        self.catalog = None

    def fit(self, state) -> 'Dist':
        self.catalog = state.corpus.catalog
        return self

    def rank(
        self,
        instance: EvalInstance,
        candidates: Sequence[str],
        rng: Optional[np.random.Generator] = None,
    ) -> list[str]:
        if self.catalog is None:
            raise RuntimeError("Dist must be fitted before ranking")
        last = self.catalog.get(instance.context[-1].poi_id)
        pois = [self.catalog.get(p) for p in candidates]
        return rank_by_distance((last.lat, last.lon), pois)
