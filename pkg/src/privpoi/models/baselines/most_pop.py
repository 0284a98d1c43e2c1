from collections import Counter
from collections.abc import Sequence
from typing import Any, Optional

import numpy as np

from privpoi.data.corpus import EvalInstance


class MostPop:
    """Most popular POIs.

    Ranks candidates by their training check-in count, most visited first;
    ties go to the smaller POI id.

    Parameters
    ----------
    config
        Unused; accepted for a uniform method interface.
    """
    def __init__(self, config: Optional[dict[str, Any]] = None) -> None:
        self.name = 'MostPop'
        self.config = config
        self.counts: Counter = Counter()

    def fit(self, state) -> 'MostPop':
        """Count check-ins over every user's training days."""
        self.counts = Counter(
            record.poi_id
            for days in state.split.train.values()
            for day in days
            for record in day
        )
        return self

    def rank(
        self,
        instance: EvalInstance,
        candidates: Sequence[str],
        rng: Optional[np.random.Generator] = None,
    ) -> list[str]:
        return sorted(candidates, key=lambda poi: (-self.counts[poi], poi))
