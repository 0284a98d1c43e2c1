"""
Application configuration.

Layers, lowest to highest precedence: the packaged conf/default.yaml, a user
YAML file, then command-line overrides given as an OmegaConf dotlist
('privacy.epsilon=0.5').
"""
import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass, replace
from importlib.resources import files
from pathlib import Path
from typing import Any, Optional, Union

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException
from platformdirs import user_cache_dir, user_data_dir

from privpoi.core.utils.errors import ConfigError
from privpoi.llm.types import ClientPolicy
from privpoi.modules.extraction import ExtractionConfig
from privpoi.modules.recommender import PipelineSwitches, ablation_switches
from privpoi.privacy.config import PrivacyConfig

log = logging.getLogger('privpoi')

__all__ = [
    'AppConfig',
    'load_config',
    'default_work_dir',
]

_SECRET_MARKERS = ('api_key', 'secret', 'token')


def default_work_dir() -> Path:
    return Path(user_data_dir('privpoi'))


def _redact(node: Any) -> Any:
    if isinstance(node, dict):
        return {
            k: ('***' if any(s in str(k).lower() for s in _SECRET_MARKERS) else _redact(v))
            for k, v in node.items()
        }
    if isinstance(node, list):
        return [_redact(v) for v in node]
    return node


@dataclass(frozen=True, eq=False)
class AppConfig:
    """Resolved application config with typed views of its sections."""
    cfg: DictConfig

    def section(self, name: str) -> dict[str, Any]:
        node = self.cfg.get(name)
        if node is None:
            return {}
        return OmegaConf.to_container(node, resolve=True)

    @property
    def seed(self) -> int:
        return int(self.cfg.seed)

    @property
    def jobs(self) -> int:
        return int(self.cfg.jobs) if self.cfg.jobs is not None else (os.cpu_count() or 1)

    def path(self, name: str) -> Optional[Path]:
        value = self.section('paths').get(name)
        return Path(value).expanduser() if value else None

    def privacy(self) -> PrivacyConfig:
        return PrivacyConfig.from_dict(self.section('privacy'))

    def extraction(self) -> ExtractionConfig:
        return self.switches().extraction_config(
            m=int(self.cfg.extraction.m), n=int(self.cfg.extraction.n),
        )

    def switches(self) -> PipelineSwitches:
        """Ablation switches, narrowed by extraction.aspects and
        extraction.reflection_sources when those are set.
        """
        switches = ablation_switches(list(self.cfg.get('ablate') or []))
        extraction = self.section('extraction')
        wanted = ExtractionConfig.from_dict({
            key: extraction.get(key) for key in ('aspects', 'reflection_sources')
        })
        return replace(
            switches,
            aspects=tuple(a for a in switches.aspects if a in wanted.aspects),
            reflection_sources=tuple(
                s for s in switches.reflection_sources if s in wanted.reflection_sources
            ),
        )

    def llm_config(self) -> dict[str, Any]:
        llm = self.section('llm')
        return {k: llm[k] for k in ('model', 'temperature', 'max_tokens', 'repair_retries')}

    def recommender_config(self) -> dict[str, Any]:
        return {
            **self.llm_config(),
            'social_cap': int(self.cfg.neighbors.social_cap),
            'distance_bins': list(self.cfg.privacy.distance_bins),
        }

    def policy(self) -> ClientPolicy:
        return ClientPolicy.from_dict(self.section('llm'))

    def to_dict(self) -> dict[str, Any]:
        """Effective config with secrets redacted, for run manifests."""
        return _redact(OmegaConf.to_container(self.cfg, resolve=True))


def load_config(
    path: Optional[Union[Path, str]] = None,
    overrides: Sequence[str] = (),
) -> AppConfig:
    """Merge defaults, an optional YAML file and dotlist overrides.

    Raises
    ------
    ConfigError
        If the file is missing or the merged config is invalid.
    """
    layers = [OmegaConf.create(
        files('privpoi').joinpath('conf/default.yaml').read_text(encoding='utf-8'),
    )]
    try:
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"Config file not found: {path}")
            layers.append(OmegaConf.load(path))
        if overrides:
            layers.append(OmegaConf.from_dotlist(list(overrides)))
        cfg = OmegaConf.merge(*layers)

        if cfg.paths.work_dir is None:
            cfg.paths.work_dir = str(default_work_dir())
        if cfg.paths.cassette is None and cfg.llm.backend in ('replay', 'record'):
            cfg.paths.cassette = str(Path(user_cache_dir('privpoi')) / 'cassette.ndjson')
        OmegaConf.resolve(cfg)
    except OmegaConfBaseException as e:
        raise ConfigError(f"Invalid configuration: {e}") from e

    app = AppConfig(cfg)
    # Validate every typed section up front.
    app.privacy()
    app.extraction()
    app.policy()
    if cfg.llm.backend not in ('openai', 'replay', 'record'):
        raise ConfigError(f"Unknown llm.backend '{cfg.llm.backend}'")
    if int(cfg.eval.runs) < 1 or int(cfg.eval.candidates) < 1:
        raise ConfigError("eval.runs and eval.candidates must be positive")
    return app
