"""
Note: If adding new public methods, please add them to __all__
at the top of the file and in utils/__init__.py.
"""
import os
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    'get_method_dirs',
    'get_method_files',
    '_get_dir',
    'derive_rng',
    'STREAM',
]

# Independent random streams per concern, combined with the master seed.
STREAM = {
    'views': 0,
    'distributions': 1,
    'social': 2,
    'participation': 3,
    'candidates': 4,
    'release': 5,
    'agreement': 6,
}


def derive_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Deterministic numpy Generator for (seed, stream, keys...).

    Parameters
    ----------
    seed
        Master seed.
    stream
        Name of the random stream, one of STREAM.
    keys
        Further non-negative integers, e.g. a user index or run number.
    """
    if stream not in STREAM:
        raise ValueError(f"Unknown random stream '{stream}'")
    return np.random.default_rng([int(seed), STREAM[stream], *(int(k) for k in keys)])


def get_method_dirs(directory: Union[Path, str]) -> tuple[list[Path], list[str]]:
    """Get all method family subdirectories in a given directory.
    
    Parameters
    ----------
    directory
        The parent directory.
    """
    if isinstance(directory, str):
        directory = Path(directory)
    
    dirs = []
    dir_names = []
    avoid_list = ['__pycache__']

    for item in sorted(directory.iterdir()):
        if item.is_dir() and (item.name not in avoid_list):
            dirs.append(item)
            dir_names.append(item.name)

    return dirs, dir_names


def get_method_files(directory: Union[Path, str]) -> tuple[list[Path], list[str]]:
    """Get all method source files in a given directory.
    
    Parameters
    ----------
    directory
        The method family directory.
    """
    if isinstance(directory, str):
        directory = Path(directory)
    
    files = []
    file_names = []
    avoid_list = ['__init__', '.DS_Store', 'README', '.git']
    
    for item in sorted(directory.iterdir()):
        # Remove file extension
        name, ext = os.path.splitext(item.name)
        if item.is_file() and ext == '.py' and (name not in avoid_list):
            files.append(item)
            file_names.append(name)
    return files, file_names


def _get_dir(dir_name: str) -> Path:
    """Get the path for the given package directory name."""
    dir = Path(os.path.dirname(os.path.abspath(__file__)))
    dir = dir.parent.parent / dir_name
    return dir
