import logging
import threading
from collections import Counter
from collections.abc import Sequence
from typing import Any, Optional

import numpy as np

from privpoi.api.pipeline import release_context
from privpoi.data.corpus import EvalInstance
from privpoi.llm.client import LlmClient
from privpoi.modules.recommender import (RecommendationRequest,
                                         RecommendationResult, Recommender)

log = logging.getLogger('privpoi')


class ReflectiveLlm:
    """LLM recommender over reflectively extracted, privacy-protected
    preferences.

    The query context is released exactly as the training data was, then the
    recommender predicts the next category, region and distance and asks for
    ten ranked candidates. Only the returned items are ranked.

    Parameters
    ----------
    config
        Recommender settings (social_cap, history_days, distance_bins) and
        dialogue settings (model, temperature, max_tokens, repair_retries).
    client
        Shared LLM client.
    """
    def __init__(
        self,
        config: Optional[dict[str, Any]] = None,
        client: Optional[LlmClient] = None,
    ) -> None:
        self.name = 'ReflectiveLlm'
        self.config = config
        self.client = client
        self.state = None
        self.recommender: Optional[Recommender] = None
        self.stats: Counter = Counter()
        self._lock = threading.Lock()

    def fit(self, state) -> 'ReflectiveLlm':
        """Attach to a released state whose KB has been populated."""
        if self.client is None:
            raise ValueError("ReflectiveLlm needs an LLM client")
        self.state = state
        self.recommender = Recommender(
            state.corpus.catalog,
            state.kb,
            state.distributions,
            state.graph,
            self.client,
            switches=state.switches,
            config=self.config,
        )
        return self

    def recommend(
        self,
        instance: EvalInstance,
        candidates: Sequence[str],
        rng: np.random.Generator,
    ) -> RecommendationResult:
        if self.recommender is None:
            raise RuntimeError("ReflectiveLlm must be fitted before ranking")
        day, hour = instance.query_time
        request = RecommendationRequest(
            user_id=instance.user_id,
            current=release_context(self.state, instance, rng),
            query_day=day,
            query_hour=hour,
            candidates=tuple(candidates),
            history=self.state.released[instance.user_id].days,
        )
        result = self.recommender.recommend(request)
        with self._lock:
            self.stats['requests'] += 1
            self.stats['fallbacks'] += int(result.fallback)
            self.stats['dropped'] += int(result.diagnostics.get('dropped', 0))
        return result

    def rank(
        self,
        instance: EvalInstance,
        candidates: Sequence[str],
        rng: Optional[np.random.Generator] = None,
    ) -> list[str]:
        if rng is None:
            rng = np.random.default_rng(0)
        return list(self.recommend(instance, candidates, rng).poi_ids)
