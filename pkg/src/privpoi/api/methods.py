"""
Note: If adding new public methods, please add them to __all__
at the top of the file and in api/__init__.py.
"""
import importlib.util
import logging
import re
from typing import Optional

from privpoi.core.utils import _get_dir, get_method_dirs, get_method_files

log = logging.getLogger('privpoi')

__all__ = [
    'available_methods',
    'load_method',
]


def available_methods() -> dict[str, list[str]]:
    """Identify and list all rankable methods in privpoi.

    Returns
    -------
    dict
        Method family -> method file names, e.g. {'baselines': ['dist', ...]}.
    """
    method_dir = _get_dir('models')
    methods = {}

    dirs, _ = get_method_dirs(method_dir)
    for dir in dirs:
        _, file_names = get_method_files(dir)
        methods[dir.name] = file_names

    return methods


def load_method(method: str, ver_name: Optional[str] = None) -> type:
    """Load a method class from the models directory.

    Each file in `models/<family>/` should only contain one method class.

    Parameters
    ----------
    method
        The method name, as a class name ('MostPop') or file name ('most_pop').
    ver_name
        The class to load within the method file.

    Returns
    -------
    type
        The uninstantiated method class.
    """
    if ver_name is None:
        ver_name = method  # Default to the method name if no class is specified

    # Convert CamelCase to snake_case
    name = re.sub(r'([a-z])([A-Z])', r'\1_\2', method).lower()
    family = next(
        (f for f, names in available_methods().items() if name in names), None,
    )
    if family is None:
        raise ImportError(f"Method '{method}' not found.")
    source = _get_dir('models') / family / f'{name}.py'

    # Load the method dynamically as a module
    try:
        spec = importlib.util.spec_from_file_location(f'privpoi.models.{family}.{name}', source)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
    except ImportError as e:
        raise ImportError(f"Method '{method}' not found.") from e

    # Retrieve class name if possible, otherwise get first class defined in the file
    try:
        cls = getattr(module, ver_name)
    except AttributeError as e:
        classes = [
            attr for attr in dir(module)
            if isinstance(getattr(module, attr), type)
            and getattr(module, attr).__module__ == module.__name__
        ]
        if not classes:
            raise ImportError(f"Method class '{ver_name}' not found in '{source}'.") from e

        log.warning(
            f"Method class '{ver_name}' not found in module '{module.__file__}'. "
            f"Falling back to the first available: '{classes[0]}'.",
        )
        cls = getattr(module, classes[0])

    return cls
