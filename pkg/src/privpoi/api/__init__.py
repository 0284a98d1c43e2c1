from .methods import available_methods, load_method
from .pipeline import (PipelineState, build_private_state, extract,
                       load_private_state, preprocess, release_context,
                       save_private_state)

__all__ = [
    'available_methods',
    'load_method',
    'PipelineState',
    'build_private_state',
    'extract',
    'load_private_state',
    'preprocess',
    'release_context',
    'save_private_state',
]
