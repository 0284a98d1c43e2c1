"""
Prompt templates and the text formatting of sequences, candidates and
preferences that gets substituted into them.

Template bodies live in prompts/<version>/<template_id>.txt and use
`string.Template` placeholders ($name or ${name}).

Note: If adding new public methods, please add them to __all__
at the top of the file and in prompting/__init__.py.
"""
import logging
import string
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from importlib.resources import files

log = logging.getLogger('privpoi')

__all__ = [
    'PROMPT_VERSION',
    'ASPECT_WORDS',
    'PREFERENCE_TYPES',
    'PromptTemplate',
    'load_template',
    'render',
    'format_hour',
    'format_km',
    'format_tokens',
    'format_checkins',
    'format_candidates',
    'format_hints',
]

PROMPT_VERSION = 'v1'

# noun, plural, adjective, display name.
ASPECT_WORDS = {
    'category': ('category', 'categories', 'categorical', 'Category'),
    'region': ('region', 'regions', 'regional', 'Region'),
    'distance': ('distance', 'distances', 'distance', 'Distance'),
}

# Preference type -> (aspect, kind). Distance has no transition preference.
PREFERENCE_TYPES = {
    'categorical_transition': ('category', 'transition'),
    'categorical_temporal': ('category', 'temporal'),
    'regional_transition': ('region', 'transition'),
    'regional_temporal': ('region', 'temporal'),
    'distance_temporal': ('distance', 'temporal'),
}


@dataclass(frozen=True)
class PromptTemplate:
    """A versioned prompt body with named placeholders."""
    template_id: str
    body: str
    version: str = PROMPT_VERSION

    @property
    def placeholders(self) -> tuple[str, ...]:
        names = []
        for match in string.Template.pattern.finditer(self.body):
            name = match.group('named') or match.group('braced')
            if name and name not in names:
                names.append(name)
        return tuple(names)

    def render(self, bindings: Mapping[str, object]) -> str:
        """Substitute `bindings`; extra bindings are ignored.

        Raises
        ------
        ValueError
            If a placeholder has no binding.
        """
        missing = [name for name in self.placeholders if name not in bindings]
        if missing:
            raise ValueError(
                f"Template '{self.template_id}' is missing binding '{missing[0]}'",
            )
        return string.Template(self.body).substitute(
            {k: str(v) for k, v in bindings.items()},
        )


@lru_cache(maxsize=None)
def load_template(template_id: str, version: str = PROMPT_VERSION) -> PromptTemplate:
    """Read prompts/<version>/<template_id>.txt from the package."""
    resource = files('privpoi.prompting') / 'prompts' / version / f"{template_id}.txt"
    try:
        body = resource.read_text(encoding='utf-8')
    except FileNotFoundError as e:
        raise ValueError(f"Unknown prompt template '{template_id}' ({version})") from e
    return PromptTemplate(template_id=template_id, body=body, version=version)


def render(
    template_id: str,
    bindings: Mapping[str, object],
    version: str = PROMPT_VERSION,
) -> str:
    return load_template(template_id, version).render(bindings)


## Formatting ---------------------------------------------------------------#
def format_hour(hour: int) -> str:
    """0 -> '12am', 13 -> '1pm'."""
    if not 0 <= hour <= 23:
        raise ValueError(f"hour out of range: {hour}")
    suffix = 'am' if hour < 12 else 'pm'
    return f"{hour % 12 or 12}{suffix}"


def format_km(km: float) -> str:
    """Distance in km rounded to 0.1, e.g. '12km', '5.3km'."""
    return f"{round(float(km), 1):g}km"


def format_tokens(tokens: Iterable[tuple[str, str, int]]) -> str:
    """(label, day, hour) triples as '(Gym, Mon, 5pm), (Bars, Mon, 8pm)'."""
    return ', '.join(f"({label}, {day}, {format_hour(hour)})" for label, day, hour in tokens)


def format_checkins(checkins: Iterable[tuple[str, str, str, str, int]]) -> str:
    """(poi, category, region, day, hour) tuples in check-in order."""
    return ', '.join(
        f"({poi}, {category}, {region}, {day}, {format_hour(hour)})"
        for poi, category, region, day, hour in checkins
    )


def format_candidates(candidates: Iterable[tuple[str, str, str, float]]) -> str:
    """(name, category, region, km) tuples as rendered in the candidate list."""
    return ', '.join(
        f"({name}, {category}, {region}, {format_km(km)})"
        for name, category, region, km in candidates
    )


def format_hints(hints: Mapping[str, str], aspects: Sequence[str] = ('category', 'region', 'distance')) -> str:
    """Aspect hints for the final recommendation prompt.

    Aspects without a predicted label are named without a value.
    """
    parts = [
        f"{aspect} {{{hints[aspect]}}}" if hints.get(aspect) else aspect
        for aspect in aspects
    ]
    if len(parts) == 1:
        return parts[0]
    return ', '.join(parts[:-1]) + f", and {parts[-1]}"
