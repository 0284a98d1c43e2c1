from .harness import (RESULT_COLUMNS, EvalRun, results_frame, run_eval,
                      sample_candidates, write_results)
from .sweep import (DEFAULT_GRIDS, SWEEP_PARAMETERS, agreement_sweep,
                    nearest_indices, neighbor_agreement, parse_grid, sweep,
                    write_sweep)

__all__ = [
    'RESULT_COLUMNS',
    'EvalRun',
    'results_frame',
    'run_eval',
    'sample_candidates',
    'write_results',
    'DEFAULT_GRIDS',
    'SWEEP_PARAMETERS',
    'agreement_sweep',
    'nearest_indices',
    'neighbor_agreement',
    'parse_grid',
    'sweep',
    'write_sweep',
]
