from .errors import (ApiError, ConfigError, DatasetError, EvaluationError,
                     ExtractionError, KBError, LlmError, ParseError,
                     PrivPoiError, ReplayMissError, TransportError)
from .io import (atomic_write_text, dump_json, load_json, read_ndjson, to_ndjson_line,
                 write_ndjson)
from .utils import STREAM, _get_dir, derive_rng, get_method_dirs, get_method_files

__all__ = [
    'get_method_dirs',
    'get_method_files',
    '_get_dir',
    'derive_rng',
    'STREAM',
    'atomic_write_text',
    'dump_json',
    'load_json',
    'read_ndjson',
    'to_ndjson_line',
    'write_ndjson',
    'PrivPoiError',
    'ConfigError',
    'DatasetError',
    'ParseError',
    'LlmError',
    'TransportError',
    'ApiError',
    'ReplayMissError',
    'KBError',
    'ExtractionError',
    'EvaluationError',
]
