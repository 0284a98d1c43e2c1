"""
Command-line interface.

    privpoi ingest     build the corpus from raw TSV dumps
    privpoi perturb    release every user's training data
    privpoi extract    extract preferences into the KB
    privpoi recommend  answer one recommendation request
    privpoi evaluate   evaluate methods, write results.csv
    privpoi sweep      sweep a parameter, write sweep.csv

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
import argparse
import inspect
import json
import logging
import os
import sys
from collections.abc import Mapping, Sequence
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import openai

from privpoi import __version__
from privpoi.api.methods import load_method
from privpoi.api.pipeline import (PipelineState, build_private_state,
                                  extract, load_private_state, preprocess,
                                  save_private_state)
from privpoi.config import AppConfig, load_config
from privpoi.core.utils.errors import ConfigError, DatasetError, PrivPoiError
from privpoi.core.utils.io import dump_json, load_json
from privpoi.core.utils.utils import derive_rng
from privpoi.data.corpus import (DAY_NAMES, Corpus, EvalInstance,
                                 derive_aux_sequences, resolve_timezone)
from privpoi.data.store import load_corpus
from privpoi.evaluation.harness import EvalRun, run_eval, write_results
from privpoi.evaluation.sweep import (agreement_sweep, parse_grid, sweep,
                                      write_sweep)
from privpoi.llm.backends import API_KEY_ENV, OpenAIBackend
from privpoi.llm.cassette import CassetteRecorder, load_cassette, record_cassette
from privpoi.llm.client import LlmClient
from privpoi.llm.types import ChatBackend
from privpoi.modules.kb import PreferenceKB
from privpoi.modules.neighbors import collect_distributions

log = logging.getLogger('privpoi')

__all__ = [
    'KeyValueFormatter',
    'build_parser',
    'main',
]


class KeyValueFormatter(logging.Formatter):
    """ts=... level=... logger=... msg="..." lines."""
    def format(self, record: logging.LogRecord) -> str:
        ts = datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(timespec='milliseconds')
        msg = record.getMessage().replace('\\', '\\\\').replace('"', '\\"').replace('\n', ' ')
        line = f'ts={ts} level={record.levelname} logger={record.name} msg="{msg}"'
        if record.exc_info:
            exc = self.formatException(record.exc_info).replace('\n', ' | ')
            line += f' exc="{exc}"'
        return line


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    log.handlers[:] = [handler]
    log.setLevel(level.upper())
    log.propagate = False


## Parser -------------------------------------------------------------------#
def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='privpoi',
        description='Privacy-preserving next-POI recommendation with an LLM.',
    )
    parser.add_argument('--config', help='YAML config file')
    parser.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='config override, e.g. privacy.epsilon=0.5 (repeatable)',
    )
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--jobs', type=int, help='worker threads (default: logical cores)')
    parser.add_argument('--seed', type=int, help='master seed')
    parser.add_argument('--work-dir', help='directory for corpus, state, KB and runs')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('ingest', help='build the corpus from raw TSV dumps')
    p.add_argument('--checkins', help='check-in TSV')
    p.add_argument('--pois', help='POI TSV')
    p.add_argument('--social', help='social edge TSV')
    p.add_argument('--out', help='corpus directory')

    p = sub.add_parser('perturb', help="release every user's training data")
    p.add_argument('--corpus', help='corpus directory')
    p.add_argument('--out', help='state directory')
    p.add_argument('--epsilon', type=float, help='privacy budget')
    p.add_argument('--h-min', type=int, help='fewest POIs a fuzzification circle covers')
    p.add_argument('--h-max', type=int, help='most POIs a fuzzification circle covers')
    p.add_argument('--distance-bins', type=_float_list, help='comma list of bin edges in km')
    p.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='master seed')
    p.add_argument('--ablate', help='comma list of ablations, e.g. --ablate=-SR,-PT-P')

    p = sub.add_parser('extract', help='extract preferences into the KB')
    p.add_argument('--corpus', help='corpus directory')
    p.add_argument('--kb', help='KB file')
    p.add_argument('--m', type=int, help='segments per reflection source')
    p.add_argument('--n', type=int, help='maximum segment length')
    p.add_argument('--participation', type=float, help='neighbor participation rate')
    p.add_argument('--aspects', help='comma list of category, region, distance')
    p.add_argument('--reflection-sources', help='comma list of recent, history')
    p.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='master seed')
    p.add_argument('--epsilon', type=float, help='privacy budget')
    p.add_argument('--ablate', help='comma list of ablations')

    p = sub.add_parser('recommend', help='answer one recommendation request')
    p.add_argument('--corpus', help='corpus directory')
    p.add_argument('--kb', help='KB file')
    p.add_argument('--user', required=True, help='user id')
    p.add_argument('--at', required=True, help='query time (ISO 8601)')
    p.add_argument('--candidates-file', required=True, help='one candidate POI id per line')
    p.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='master seed')
    p.add_argument('--epsilon', type=float, help='privacy budget')
    p.add_argument('--ablate', help='comma list of ablations')

    p = sub.add_parser('evaluate', help='evaluate methods and write results.csv')
    p.add_argument('--corpus', help='corpus directory')
    p.add_argument('--kb', help='KB file')
    p.add_argument('--methods', help='comma list, e.g. MostPop,Dist,ReflectiveLlm')
    p.add_argument('--runs', type=int, help='repetitions')
    p.add_argument('--out', help='output directory')
    p.add_argument('--epsilon', type=float, help='privacy budget')
    p.add_argument('--ablate', help='comma list of ablations')

    p = sub.add_parser('sweep', help='sweep one parameter and write sweep.csv')
    p.add_argument('--corpus', help='corpus directory')
    p.add_argument(
        '--parameter', required=True,
        choices=('epsilon', 'm', 'n', 'participation', 'agreement'),
    )
    p.add_argument('--grid', help="comma list or start:stop:step (default grid if omitted)")
    p.add_argument('--methods', help='comma list of methods')
    p.add_argument('--runs', type=int, help='repetitions')
    p.add_argument('--out', help='output directory')
    p.add_argument('--ablate', help='comma list of ablations')
    return parser


def _overrides(args: argparse.Namespace) -> list[str]:
    """Dotlist overrides from the flags; flags win over --set."""
    out = list(args.overrides)
    flags = {
        'seed': 'seed',
        'jobs': 'jobs',
        'work_dir': 'paths.work_dir',
        'log_level': 'log_level',
        'checkins': 'paths.checkins',
        'pois': 'paths.pois',
        'social': 'paths.social',
        'corpus': 'paths.corpus',
        'kb': 'paths.kb',
        'epsilon': 'privacy.epsilon',
        'h_min': 'privacy.h_min',
        'h_max': 'privacy.h_max',
        'm': 'extraction.m',
        'n': 'extraction.n',
        'participation': 'extraction.participation',
        'runs': 'eval.runs',
    }
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    if getattr(args, 'ablate', None):
        names = [a.strip() for a in args.ablate.split(',') if a.strip()]
        out.append(f"ablate=[{','.join(names)}]")
    if getattr(args, 'distance_bins', None):
        out.append(f"privacy.distance_bins=[{','.join(str(b) for b in args.distance_bins)}]")
    for attr in ('aspects', 'reflection_sources'):
        if getattr(args, attr, None):
            names = [a.strip() for a in getattr(args, attr).split(',') if a.strip()]
            out.append(f"extraction.{attr}=[{','.join(names)}]")
    if getattr(args, 'methods', None):
        out.append(f"eval.methods=[{args.methods}]")
    return out


## Shared plumbing ----------------------------------------------------------#
class _Runtime:
    """Lazily built LLM client and run bookkeeping of one invocation."""
    def __init__(
        self,
        app: AppConfig,
        env: Mapping[str, str],
        backend: Optional[ChatBackend] = None,
    ) -> None:
        self.app = app
        self.env = env
        self._backend = backend
        self._client: Optional[LlmClient] = None
        self._recorder: Optional[CassetteRecorder] = None

    def _openai(self) -> OpenAIBackend:
        key = self.env.get(API_KEY_ENV)
        if not key:
            raise ConfigError(f"Environment variable {API_KEY_ENV} is not set")
        base_url = self.app.section('llm').get('base_url')
        return OpenAIBackend(
            client=openai.OpenAI(api_key=key, base_url=base_url, max_retries=0),
        )

    def client(self) -> LlmClient:
        if self._client is None:
            backend = self._backend
            kind = self.app.cfg.llm.backend
            if backend is None:
                if kind == 'replay':
                    backend = load_cassette(self.app.path('cassette'))
                else:
                    backend = self._openai()
            if kind == 'record':
                backend = self._recorder = CassetteRecorder(backend)
            self._client = LlmClient(backend, self.app.policy(), record_transcript=True)
        return self._client

    def close(self) -> None:
        if self._recorder is not None:
            record_cassette(self._recorder, self.app.path('cassette'))


def _write_manifest(directory: Path, command: str, app: AppConfig, extra: Optional[dict] = None) -> None:
    dump_json(directory / 'run-manifest.json', {
        'command': command,
        'version': __version__,
        'seed': app.seed,
        'config': app.to_dict(),
        **(extra or {}),
    })


def _corpus(app: AppConfig) -> Corpus:
    path = app.path('corpus')
    if path is None:
        raise ConfigError("paths.corpus is not set")
    return load_corpus(path)


def _state(app: AppConfig, corpus: Corpus, privacy=None, participation=None) -> PipelineState:
    """Released state of the configured run, reusing a saved release when it matches."""
    privacy = privacy or app.privacy()
    switches = app.switches()
    participation = participation or float(app.cfg.extraction.participation)
    state_dir = app.path('state')
    if state_dir is not None and (state_dir / 'manifest.json').exists():
        manifest = load_json(state_dir / 'manifest.json')
        same = (
            manifest.get('seed') == app.seed
            and manifest.get('privacy') == privacy.to_dict()
            and manifest.get('switches', {}).get('ablations') == list(switches.ablations)
        )
        if same and participation == float(app.cfg.extraction.participation):
            log.info(f"Using released state from {state_dir}")
            return load_private_state(corpus, state_dir, switches)
    return build_private_state(
        corpus, privacy, switches, seed=app.seed, participation=participation,
        alpha=float(app.cfg.neighbors.alpha),
    )


def _methods(app: AppConfig, runtime: _Runtime, state: PipelineState) -> list:
    methods = []
    for name in list(app.cfg.eval.methods):
        cls = load_method(str(name))
        kwargs: dict[str, Any] = {'config': app.recommender_config()}
        if 'client' in inspect.signature(cls).parameters:
            kwargs['client'] = runtime.client()
        methods.append(cls(**kwargs).fit(state))
    return methods


def _uses_llm(app: AppConfig) -> bool:
    return any(
        'client' in inspect.signature(load_method(str(name))).parameters
        for name in app.cfg.eval.methods
    )


def _evaluate_state(
    app: AppConfig,
    runtime: _Runtime,
    state: PipelineState,
    out: Path,
) -> list[EvalRun]:
    instances = state.split.instances(str(app.cfg.eval.bucket))
    if not instances:
        raise DatasetError("No evaluation instances in the corpus")
    pois = [p.poi_id for p in state.corpus.catalog]
    results = []
    for method in _methods(app, runtime, state):
        client = getattr(method, 'client', None)
        results.append(run_eval(
            method,
            instances,
            pois,
            runs=int(app.cfg.eval.runs),
            seed=app.seed,
            k=int(app.cfg.eval.candidates),
            jobs=app.jobs,
            client=client,
            transcript_dir=out / 'transcripts' / method.name if client else None,
        ))
        if getattr(method, 'stats', None):
            log.info(f"{method.name} diagnostics: {dict(method.stats)}")
    return results


## Subcommands --------------------------------------------------------------#
def _cmd_ingest(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    checkins, pois = app.path('checkins'), app.path('pois')
    if checkins is None or pois is None:
        raise ConfigError("ingest needs --checkins and --pois (or paths.checkins/paths.pois)")
    out = Path(args.out) if args.out else app.path('corpus')
    corpus = preprocess(
        checkins, pois, app.path('social'), config=app.section('corpus'), out_dir=out,
    )
    _write_manifest(out, 'ingest', app)
    print(json.dumps(corpus.statistics(), indent=2, sort_keys=True))
    return 0


def _cmd_perturb(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    corpus = _corpus(app)
    out = Path(args.out) if args.out else app.path('state')
    state = build_private_state(
        corpus, app.privacy(), app.switches(), seed=app.seed,
        participation=float(app.cfg.extraction.participation),
        alpha=float(app.cfg.neighbors.alpha),
    )
    save_private_state(state, out)
    _write_manifest(out, 'perturb', app)
    return 0


def _cmd_extract(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    corpus = _corpus(app)
    state = _state(app, corpus)
    kb = PreferenceKB(app.path('kb'))
    extracted = extract(
        state,
        runtime.client(),
        kb=kb,
        config=app.section('extraction'),
        llm_config=app.llm_config(),
        jobs=app.jobs,
    )
    _write_manifest(app.path('kb').parent, 'extract', app, {
        'extracted_users': len(extracted),
        'llm_calls': dict(sorted(runtime.client().calls.items())),
    })
    return 0


def _cmd_recommend(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    corpus = _corpus(app)
    if args.user not in corpus.sequences:
        raise DatasetError(f"Unknown user '{args.user}'")
    try:
        at = datetime.fromisoformat(args.at)
    except ValueError as e:
        raise ConfigError(f"--at is not an ISO 8601 time: {args.at}") from e
    if at.tzinfo is None:
        at = at.replace(tzinfo=timezone.utc)
    at = at.astimezone(resolve_timezone(corpus.params.get('timezone', 'UTC')))

    path = Path(args.candidates_file)
    if not path.exists():
        raise DatasetError("candidates file not found", path=str(path))
    candidates = [line.strip() for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]
    unknown = [c for c in candidates if c not in corpus.catalog]
    if unknown:
        raise DatasetError(f"Unknown candidate POI '{unknown[0]}'", path=str(path))

    # Context: the user's latest day, up to the query time.
    day = corpus.sequences[args.user].current
    context = tuple(r for r in day if r.timestamp < at) or day
    truth = context[-1]
    instance = EvalInstance(
        user_id=args.user,
        context=context,
        truth=replace(truth, day_of_week=DAY_NAMES[at.weekday()], hour_of_day=at.hour),
    )

    state = _state(app, corpus)
    state.kb = PreferenceKB(app.path('kb'))
    cls = load_method('ReflectiveLlm')
    method = cls(config=app.recommender_config(), client=runtime.client()).fit(state)
    result = method.recommend(instance, candidates, derive_rng(app.seed, 'views', 0))
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_evaluate(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    corpus = _corpus(app)
    out = Path(args.out) if args.out else app.path('out')
    state = _state(app, corpus)
    if _uses_llm(app):
        state.kb = PreferenceKB(app.path('kb'))
    results = _evaluate_state(app, runtime, state, out)
    write_results(results, out / 'results.csv')
    _write_manifest(out, 'evaluate', app, {
        'runs': {r.method: [list(s) for s in r.seeds] for r in results},
        'skipped': {r.method: r.skipped for r in results},
    })
    return 0


def _cmd_sweep(app: AppConfig, runtime: _Runtime, args: argparse.Namespace) -> int:
    corpus = _corpus(app)
    out = Path(args.out) if args.out else app.path('out')
    grid = parse_grid(args.parameter, args.grid)

    if args.parameter == 'agreement':
        split_state = build_private_state(corpus, app.privacy(), app.switches(), seed=app.seed)
        views = {
            u: derive_aux_sequences(split_state.split.training_sequences(u), corpus.catalog)
            for u in split_state.users
        }
        distributions = collect_distributions(views, corpus.catalog, None, seed=app.seed)
        frame = agreement_sweep(
            distributions, grid,
            trials=int(app.cfg.eval.agreement_trials),
            seed=app.seed,
            sensitivity=app.privacy().laplace_sensitivity,
        )
    else:
        def evaluate_point(value) -> list[EvalRun]:
            privacy, participation = app.privacy(), None
            extraction = app.section('extraction')
            if args.parameter == 'epsilon':
                privacy = privacy.with_epsilon(float(value))
            elif args.parameter == 'participation':
                participation = float(value)
            else:
                extraction[args.parameter] = int(value)
            state = build_private_state(
                corpus, privacy, app.switches(), seed=app.seed,
                participation=participation or float(extraction['participation']),
                alpha=float(app.cfg.neighbors.alpha),
            )
            if _uses_llm(app):
                extract(
                    state, runtime.client(), kb=PreferenceKB(),
                    config=extraction, llm_config=app.llm_config(), jobs=app.jobs,
                )
            return _evaluate_state(app, runtime, state, out / f"{args.parameter}-{value}")

        frame = sweep(args.parameter, grid, evaluate_point)

    write_sweep(frame, out / 'sweep.csv')
    _write_manifest(out, 'sweep', app, {'parameter': args.parameter, 'grid': list(grid)})
    return 0


_COMMANDS = {
    'ingest': _cmd_ingest,
    'perturb': _cmd_perturb,
    'extract': _cmd_extract,
    'recommend': _cmd_recommend,
    'evaluate': _cmd_evaluate,
    'sweep': _cmd_sweep,
}


def main(
    argv: Optional[Sequence[str]] = None,
    env: Optional[Mapping[str, str]] = None,
    backend: Optional[ChatBackend] = None,
) -> int:
    """Run the CLI and return the exit code.

    Parameters
    ----------
    argv
        Arguments without the program name; defaults to sys.argv[1:].
    env
        Environment; defaults to os.environ.
    backend
        Chat backend used in place of the openai or replay backend, mainly for
        tests. With llm.backend=record its replies are recorded to the cassette.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    env = os.environ if env is None else env
    try:
        app = load_config(args.config, _overrides(args))
    except PrivPoiError as e:
        _setup_logging(args.log_level or 'INFO')
        log.error(str(e))
        return 1
    _setup_logging(args.log_level or str(app.cfg.log_level))

    runtime = _Runtime(app, env, backend=backend)
    try:
        return _COMMANDS[args.command](app, runtime, args)
    except PrivPoiError as e:
        log.error(str(e))
        return 1
    finally:
        # Exchanges recorded before a failure are kept.
        runtime.close()


if __name__ == '__main__':
    sys.exit(main())
