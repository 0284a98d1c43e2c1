import logging

from privpoi.api import (available_methods, build_private_state, extract,
                         load_method, preprocess)

try:
    from privpoi._version import __version__
except ImportError:  # Not built with hatch-vcs
    __version__ = '0.0.0+unknown'

log = logging.getLogger('privpoi')
log.addHandler(logging.NullHandler())

__all__ = [
    '__version__',
    'available_methods',
    'build_private_state',
    'extract',
    'load_method',
    'preprocess',
]
