"""
Experiment configuration: a JSON file, checked key by key.

Errors name the offending field with its dotted path, so that
``{"sampling": {"bb": 3}}`` fails with ``sampling.bb``.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

from . import oomdp, utils
from .constants import (
    CANDIDATE_CAP, GRAPH_PER_PATH, GRID_CAP, REPLICATES, STEP_CAP,
    SUBSET_FRACTION, THRESHOLD, TOTAL_BUDGET
)
from .curriculum import MODES
from .learner import Hyper
from .ltlf import LtlfSyntaxError, UnknownAtomError, parse_ltlf

SEED_ENV = 'AGCL_SEED'
BASELINES = ('scratch', 'gsrs')


class ConfigError(ValueError):
    def __init__(self, message, field=None):
        super().__init__(f'{field}: {message}' if field else message)
        self.field = field


@dataclass(frozen=True)
class SamplingConfig:
    b: int = None
    subset_fraction: float = SUBSET_FRACTION
    grid_cap: int = GRID_CAP
    candidate_cap: int = CANDIDATE_CAP
    graph_per_path: int = GRAPH_PER_PATH


@dataclass(frozen=True)
class NoiseConfig:
    enabled: bool = False
    seed: int = 0


@dataclass(frozen=True)
class BudgetConfig:
    total: int = TOTAL_BUDGET
    per_source: int = None
    threshold: float = THRESHOLD
    step_cap: int = STEP_CAP


@dataclass(frozen=True)
class SeedConfig:
    master: int = 0
    replicates: int = REPLICATES


@dataclass(frozen=True)
class Config:
    formula: str
    ap: tuple
    oomdp: oomdp.OomdpSpec
    target: oomdp.TaskConfig
    modes: tuple = ('sequence',)
    eta: float = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    learner: Hyper = field(default_factory=Hyper)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    baselines: tuple = ()
    target_seed: int = 0

    def parsed_formula(self):
        return parse_ltlf(self.formula, self.ap)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """The JSON form ``parse_config`` reads back into an equal config."""
        return {
            'formula': self.formula,
            'ap': list(self.ap),
            'oomdp': self.oomdp.to_dict(),
            'target': {
                's0': self.target.s0.as_dict(),
                'sf': self.target.sf.as_dict(),
                'seed': self.target_seed,
            },
            'mode': list(self.modes),
            'eta': self.eta,
            'sampling': dataclasses.asdict(self.sampling),
            'noise': dataclasses.asdict(self.noise),
            'learner': self.learner.to_dict(),
            'budget': dataclasses.asdict(self.budget),
            'seeds': dataclasses.asdict(self.seeds),
            'baselines': list(self.baselines),
        }


# Readers

def _section(data, path, allowed):
    if not isinstance(data, dict):
        raise ConfigError('expected an object', path or None)
    for key in data:
        if key not in allowed:
            where = f'{path}.{key}' if path else key
            raise ConfigError(f'unknown key {key!r}', where)
    return data


def _number(value, path, kind=float, lo=None, hi=None, none=False):
    if value is None and none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f'expected a number, got {value!r}', path)
    if kind is int:
        try:
            value = utils.parse_count(value)
        except utils.CountParseError as e:
            raise ConfigError(str(e), path) from None
    elif isinstance(value, str):
        raise ConfigError(f'expected a number, got {value!r}', path)
    else:
        value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f'must be at least {lo}, got {value}', path)
    if hi is not None and value > hi:
        raise ConfigError(f'must be at most {hi}, got {value}', path)
    return value


def _record(cls, data, path, checks):
    data = _section(data or {}, path, {f.name for f in dataclasses.fields(cls)})
    values = {}
    for name, value in data.items():
        check = checks.get(name)
        values[name] = check(value, f'{path}.{name}') if check else value
    return cls(**values)


def _flag(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f'expected true or false, got {value!r}', path)
    return value


def _oomdp(data, ap):
    _section(data, 'oomdp', {'classes', 'bindings'})
    for i, c in enumerate(data.get('classes', ())):
        _section(c, f'oomdp.classes[{i}]', {'name', 'params'})
        for j, p in enumerate(c.get('params', ())):
            where = f'oomdp.classes[{i}].params[{j}]'
            _section(p, where, {'name', 'kind', 'range', 'count'})
            rng = p.get('range')
            if not isinstance(rng, list) or len(rng) != 2:
                raise ConfigError('expected [low, high]', f'{where}.range')
    for prop, b in data.get('bindings', {}).items():
        _section(b, f'oomdp.bindings.{prop}',
                 {'consumes', 'env', 'inv', 'terminal', 'requires'})
    try:
        spec = oomdp.OomdpSpec.from_dict(data)
        spec.validate(ap)
    except (KeyError, oomdp.SpecError) as e:
        raise ConfigError(str(e), 'oomdp') from None
    return spec


def _state(data, spec, path):
    _section(data, path, set(spec.names))
    for p in spec.params:
        if p.name not in data:
            raise ConfigError('missing', f'{path}.{p.name}')
        value = _number(data[p.name], f'{path}.{p.name}',
                        int if p.kind == oomdp.INTEGER else float)
        if not p.lo <= value <= p.hi:
            raise ConfigError(f'{value} is outside [{p.lo}, {p.hi}]',
                              f'{path}.{p.name}')
    return oomdp.OomdpState.of(
        {n: (int(v) if spec.param(n).kind == oomdp.INTEGER else float(v))
         for n, v in data.items()}, spec)


def _modes(value):
    modes = [value] if isinstance(value, str) else value
    if not isinstance(modes, list) or not modes:
        raise ConfigError('expected a mode or a list of modes', 'mode')
    for m in modes:
        if m not in MODES:
            raise ConfigError(f'unknown mode {m!r}', 'mode')
    return tuple(dict.fromkeys(modes))


def _hyper(data):
    def positive_int(value, path):
        return _number(value, path, int, lo=1)

    def unit(value, path):
        return _number(value, path, lo=0, hi=1)

    def real(value, path):
        return _number(value, path, lo=0)

    def decay(value, path):
        value = _number(value, path, lo=0)
        if value >= 1:
            raise ConfigError(f'must be below 1, got {value}', path)
        return value

    def hidden(value, path):
        if not isinstance(value, list) or not value:
            raise ConfigError('expected a list of layer sizes', path)
        return tuple(positive_int(v, f'{path}[{i}]')
                     for i, v in enumerate(value))

    checks = {
        'hidden': hidden,
        'replay_capacity': positive_int,
        'batch_size': positive_int,
        'gamma': unit,
        'learning_rate': real,
        'adam_beta1': decay,
        'adam_beta2': decay,
        'adam_eps': real,
        'eps_start': unit,
        'eps_end': unit,
        'eps_fraction': unit,
        'target_sync': positive_int,
        'eval_every': positive_int,
        'eval_episodes': positive_int,
        'source_threshold': unit,
        'huber_delta': real,
        'grad_clip': real,
        'reward_scale': real,
        'learning_starts': positive_int,
        'gsrs_scale': real,
    }
    return _record(Hyper, data, 'learner', checks)


def parse_config(data):
    """
    Check a decoded JSON configuration and build its ``Config``.
    """
    _section(data, '', {
        'formula', 'ap', 'oomdp', 'target', 'mode', 'eta', 'sampling',
        'noise', 'learner', 'budget', 'seeds', 'baselines'
    })
    for key in ('formula', 'ap', 'oomdp', 'target'):
        if key not in data:
            raise ConfigError('missing', key)

    ap = data['ap']
    if (not isinstance(ap, list)
            or not all(isinstance(p, str) and p for p in ap)
            or len(set(ap)) != len(ap)):
        raise ConfigError('expected a list of distinct names', 'ap')
    ap = tuple(sorted(ap))

    formula = data['formula']
    if not isinstance(formula, str):
        raise ConfigError('expected a string', 'formula')
    try:
        parse_ltlf(formula, ap)
    except (LtlfSyntaxError, UnknownAtomError) as e:
        raise ConfigError(str(e), 'formula') from None

    spec = _oomdp(data['oomdp'], ap)

    target = _section(data['target'], 'target', {'s0', 'sf', 'seed'})
    for key in ('s0', 'sf'):
        if key not in target:
            raise ConfigError('missing', f'target.{key}')
    target_seed = _number(target.get('seed', 0), 'target.seed', int, lo=0)
    task = oomdp.make_task(_state(target['s0'], spec, 'target.s0'),
                           _state(target['sf'], spec, 'target.sf'),
                           target_seed, is_target=True)

    sampling = _record(SamplingConfig, data.get('sampling'), 'sampling', {
        'b': lambda v, p: _number(v, p, int, lo=1, none=True),
        'subset_fraction': lambda v, p: _number(v, p, lo=1e-9, hi=1),
        'grid_cap': lambda v, p: _number(v, p, int, lo=1),
        'candidate_cap': lambda v, p: _number(v, p, int, lo=1),
        'graph_per_path': lambda v, p: _number(v, p, int, lo=1, none=True),
    })
    noise = _record(NoiseConfig, data.get('noise'), 'noise', {
        'enabled': _flag,
        'seed': lambda v, p: _number(v, p, int, lo=0),
    })
    budget = _record(BudgetConfig, data.get('budget'), 'budget', {
        'total': lambda v, p: _number(v, p, int, lo=1),
        'per_source': lambda v, p: _number(v, p, int, lo=1, none=True),
        'threshold': lambda v, p: _number(v, p, lo=1e-9, hi=1),
        'step_cap': lambda v, p: _number(v, p, int, lo=1),
    })
    seeds = _record(SeedConfig, data.get('seeds'), 'seeds', {
        'master': lambda v, p: _number(v, p, int, lo=0),
        'replicates': lambda v, p: _number(v, p, int, lo=1),
    })

    baselines = data.get('baselines', [])
    if not isinstance(baselines, list):
        raise ConfigError('expected a list', 'baselines')
    for i, name in enumerate(baselines):
        if name not in BASELINES:
            raise ConfigError(f'unknown baseline {name!r}', f'baselines[{i}]')

    config = Config(
        formula=formula,
        ap=ap,
        oomdp=spec,
        target=task,
        modes=_modes(data.get('mode', 'sequence')),
        eta=_number(data.get('eta'), 'eta', none=True),
        sampling=sampling,
        noise=noise,
        learner=_hyper(data.get('learner')),
        budget=budget,
        seeds=seeds,
        baselines=tuple(dict.fromkeys(baselines)),
        target_seed=target_seed,
    )
    return config


def load_config(path, environ=None, seeds=None, budget=None, modes=None):
    """
    Read a configuration file, or the configuration inside a run
    manifest, and apply the environment and command-line overrides.
    """
    environ = os.environ if environ is None else environ
    try:
        with open(path, encoding='utf-8') as fd:
            data = json.load(fd)
    except json.JSONDecodeError as e:
        raise ConfigError(f'not valid JSON: {e}') from None

    if isinstance(data, dict) and 'manifest_version' in data:
        logging.info('reading the configuration of run manifest %s', path)
        data = data['config']

    config = parse_config(data)

    master = environ.get(SEED_ENV)
    if master is not None:
        config = config.replace(seeds=dataclasses.replace(
            config.seeds, master=_number(master, SEED_ENV, int, lo=0)))
    if seeds is not None:
        config = config.replace(seeds=dataclasses.replace(
            config.seeds, replicates=_number(seeds, '--seeds', int, lo=1)))
    if budget is not None:
        config = config.replace(budget=dataclasses.replace(
            config.budget, total=_number(budget, '--budget', int, lo=1)))
    if modes:
        config = config.replace(modes=_modes(modes))

    return config
