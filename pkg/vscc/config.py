"""
Experiment configuration files.

An experiment is described by a YAML file (comments allowed) with the
sections ``dataset``, ``architecture``, ``train``, ``eval`` and ``sweep``,
plus ``output_dir`` and ``seed``. Missing keys take the default values of
:py:data:`DEFAULTS`; unknown keys are an error. See the presets in
``vscc/configs``.
"""
import os
import copy
import logging

import yaml

from vscc import config_dir
from vscc.coding import Method
from vscc.evaluation import EvalConfig, Mode
from vscc.network import ArchitectureConfig
from vscc.training import TrainConfig, SweepGrid
from vscc.utils import ConfigurationError, fingerprint, code_version

logger = logging.getLogger(__name__)

DEFAULTS = {
    'dataset': {
        # a manifest (.csv), a root/<class>/<image> directory or 'synthetic'
        'source': 'synthetic',
        'crop_size': 32,
        'n_test_classes': None,
        'test_fraction': 0.2,
        'on_error': 'fail',
        'resize': 'smaller',
        'max_per_class': None,
        'seed': None,
        'synthetic_classes': 10,
        'synthetic_images_per_class': 20,
    },
    'architecture': ArchitectureConfig.desk().to_dict(),
    'train': {
        'method': 'vscc',
        'train_snr_db': 5.,
        'cmc': 5.,
        'epochs': 20,
        'batch_size': 64,
        'learning_rate': 1e-4,
        'log_every': 0,
        'reconstruction_weight': 1.,
        'normalize_power': True,
        'divergence_patience': 10,
        'device': 'cpu',
    },
    'eval': {
        'mode': None,
        'test_snr_db': '-10:25:5',
        'resample_count': 20,
        'kb_granularity': 'map',
        'variance_noise': True,
        'softplus_sharpness': 100.,
        'batch_size': 64,
    },
    'sweep': {
        'methods': ['vscc', 'vae', 'ae'],
        'snrs': [-5., 5., 15.],
        'cmcs': [1., 2., 5., 10., 15.],
        'on_error': 'continue',
        'n_jobs': 1,
    },
    'output_dir': 'vscc_output',
    'seed': 0,
}

# keys which do not change any artifact
_NEUTRAL_KEYS = [('output_dir',), ('train', 'device'), ('train', 'log_every'),
                 ('eval', 'batch_size'), ('sweep', 'n_jobs'),
                 ('sweep', 'on_error')]


def _merge(defaults, user, where=''):
    out = copy.deepcopy(defaults)
    if user is None:
        return out
    if not isinstance(user, dict):
        raise ConfigurationError('{}: a mapping is expected'
                                 .format(where or 'config'))
    for k, v in user.items():
        key = '{}.{}'.format(where, k) if where else k
        if k not in defaults:
            raise ConfigurationError('unknown configuration field: ' + key)
        if isinstance(defaults[k], dict):
            out[k] = _merge(defaults[k], v, where=key)
        else:
            out[k] = v
    return out


def _canonical(obj):
    """Plain python types (tuples as lists)."""
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def parse_override(text):
    """Split a 'section.key=value' flag, the value parsed as YAML.

    Examples
    --------
    >>> parse_override('train.cmc=10')
    (['train', 'cmc'], 10)
    """
    if '=' not in text:
        raise ConfigurationError('override must read key=value: ' + text)
    key, value = text.split('=', 1)
    if ':' in value:
        # SNR ranges ('-10:25:5') are not sexagesimal numbers
        return key.strip().split('.'), value.strip()
    try:
        value = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigurationError('cannot parse value of {}: {}'
                                 .format(key, e))
    return key.strip().split('.'), value


class ExperimentConfig(object):
    """A complete experiment description.

    Attributes
    ----------
    dataset : dict
    architecture : ArchitectureConfig
    train : dict
    eval : dict
    sweep : dict
    output_dir : str
    seed : int
    """

    def __init__(self, d=None, path=None):
        d = _merge(DEFAULTS, _canonical(d or {}))
        self._d = d
        self.path = path
        self._check_input()

    def _check_input(self):
        """Build every typed object once, with field-level messages."""
        d = self._d
        try:
            self.architecture
        except (TypeError, ValueError) as e:
            raise ConfigurationError('architecture: {}'.format(e))
        for section, fn in [('train', self.train_config),
                            ('sweep', self.sweep_grid)]:
            try:
                fn()
            except (TypeError, ValueError) as e:
                raise ConfigurationError('{}: {}'.format(section, e))
        if d['eval']['mode'] is not None:
            try:
                Mode(d['eval']['mode'])
            except ValueError:
                raise ConfigurationError('eval.mode: not recognised: '
                                         '{}'.format(d['eval']['mode']))
        try:
            EvalConfig(mode=Mode.TRANSMISSION_VARIANCE, **self._eval_kwargs())
        except (TypeError, ValueError) as e:
            raise ConfigurationError('eval: {}'.format(e))
        if d['dataset']['on_error'] not in ['fail', 'skip']:
            raise ConfigurationError('dataset.on_error: must be fail or skip')
        if d['dataset']['crop_size'] != self.architecture.image_size:
            raise ConfigurationError('dataset.crop_size ({}) differs from '
                                     'architecture.image_size ({})'.format(
                                         d['dataset']['crop_size'],
                                         self.architecture.image_size))
        try:
            int(d['seed'])
        except (TypeError, ValueError):
            raise ConfigurationError('seed: an integer is expected')

    @classmethod
    def from_yaml(cls, fpath):
        """Read a config file."""
        if not os.path.exists(fpath):
            raise ConfigurationError('config file not found: ' + fpath)
        with open(fpath) as f:
            try:
                d = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigurationError('cannot parse {}: {}'.format(fpath,
                                                                      e))
        return cls(d, path=fpath)

    @classmethod
    def preset(cls, name):
        """One of the shipped configs: 'desk', 'full_scale' or 'smoke'."""
        fpath = os.path.join(config_dir, name + '.yml')
        if not os.path.exists(fpath):
            avail = sorted(f[:-4] for f in os.listdir(config_dir)
                           if f.endswith('.yml'))
            raise ConfigurationError('no preset named {} (available: {})'
                                     .format(name, ', '.join(avail)))
        return cls.from_yaml(fpath)

    @classmethod
    def load(cls, name_or_path):
        """A config file path, or the name of a preset."""
        if os.path.exists(name_or_path):
            return cls.from_yaml(name_or_path)
        return cls.preset(name_or_path)

    def to_dict(self):
        return copy.deepcopy(self._d)

    def to_yaml(self, fpath=None):
        """The canonical YAML text (written to ``fpath`` if given)."""
        text = yaml.safe_dump(self._d, sort_keys=False,
                              default_flow_style=None)
        if fpath is not None:
            with open(fpath, 'w') as f:
                f.write(text)
        return text

    def with_overrides(self, overrides):
        """A copy with 'section.key=value' overrides applied."""
        d = self.to_dict()
        for o in overrides or []:
            keys, value = parse_override(o)
            node = d
            for k in keys[:-1]:
                if not isinstance(node.get(k, None), dict):
                    raise ConfigurationError('unknown configuration field: '
                                             + '.'.join(keys))
                node = node[k]
            if keys[-1] not in node:
                raise ConfigurationError('unknown configuration field: ' +
                                         '.'.join(keys))
            node[keys[-1]] = value
        return ExperimentConfig(d, path=self.path)

    def set(self, section, key, value):
        """A copy with one field changed (None values are ignored)."""
        if value is None:
            return self
        d = self.to_dict()
        if section is None:
            d[key] = value
        else:
            d[section][key] = value
        return ExperimentConfig(d, path=self.path)

    @property
    def fingerprint(self):
        """Hash of the fields which determine the artifacts."""
        d = self.to_dict()
        for keys in _NEUTRAL_KEYS:
            node = d
            for k in keys[:-1]:
                node = node[k]
            node.pop(keys[-1])
        return fingerprint(d, code_version())

    @property
    def output_dir(self):
        return self._d['output_dir']

    @property
    def seed(self):
        return int(self._d['seed'])

    @property
    def dataset(self):
        return self._d['dataset']

    @property
    def train(self):
        return self._d['train']

    @property
    def eval(self):
        return self._d['eval']

    @property
    def sweep(self):
        return self._d['sweep']

    @property
    def architecture(self):
        return ArchitectureConfig.from_dict(self._d['architecture'])

    @property
    def checkpoint_dir(self):
        return os.path.join(self.output_dir, 'checkpoints')

    @property
    def results_dir(self):
        return os.path.join(self.output_dir, 'results')

    @property
    def figures_dir(self):
        return os.path.join(self.output_dir, 'figures')

    def kb_path(self, cell_id):
        return os.path.join(self.output_dir, 'kb', cell_id + '.nc')

    def train_config(self, **kwargs):
        """The :py:class:`~vscc.training.TrainConfig` of the train section."""
        d = dict(self._d['train'])
        if Method(d['method']) is not Method.VSCC:
            d['cmc'] = None
        d.update(kwargs)
        d.setdefault('seed', self.seed)
        d.setdefault('checkpoint_dir', self.checkpoint_dir)
        return TrainConfig(architecture=self.architecture, **d)

    def sweep_grid(self):
        s = self._d['sweep']
        return SweepGrid(methods=s['methods'], snrs=s['snrs'],
                         cmcs=s['cmcs'])

    def _eval_kwargs(self):
        e = dict(self._d['eval'])
        e.pop('mode')
        e['seed'] = self.seed
        return e

    def eval_config(self, mode=None, method=None, knowledge_base=None,
                    **kwargs):
        """The :py:class:`~vscc.evaluation.EvalConfig` of the eval section.

        The mode is taken from (in order) ``mode``, the config file, or the
        default of ``method``.
        """
        mode = mode or self._d['eval']['mode']
        if mode is None:
            if method is None:
                raise ConfigurationError('no evaluation mode given')
            mode = Mode.default_for(method)
        e = self._eval_kwargs()
        e.update(kwargs)
        return EvalConfig(mode=mode, knowledge_base=knowledge_base, **e)

    def load_data(self):
        """The :py:class:`~vscc.datasets.DatasetSplit` of the dataset
        section."""
        from vscc.datasets import (load_dataset, make_synthetic_corpus,
                                   DatasetSplit)

        ds = self._d['dataset']
        seed = self.seed if ds['seed'] is None else int(ds['seed'])
        if ds['source'] == 'synthetic':
            coll = make_synthetic_corpus(
                n_classes=ds['synthetic_classes'],
                images_per_class=ds['synthetic_images_per_class'],
                image_size=ds['crop_size'], seed=seed)
            return DatasetSplit.from_collection(
                coll, n_test_classes=ds['n_test_classes'],
                test_fraction=ds['test_fraction'], seed=seed)
        source = ds['source']
        if self.path is not None and not os.path.isabs(source) and \
                not os.path.exists(source):
            source = os.path.join(os.path.dirname(self.path), source)
        return load_dataset(source, crop_size=ds['crop_size'],
                            n_test_classes=ds['n_test_classes'],
                            test_fraction=ds['test_fraction'], seed=seed,
                            on_error=ds['on_error'], resize=ds['resize'],
                            max_per_class=ds['max_per_class'])

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and \
            self._d == other._d

    def __repr__(self):
        summary = ['<vscc.ExperimentConfig>']
        if self.path:
            summary += ['  path: ' + self.path]
        summary += ['  output_dir: ' + str(self.output_dir)]
        summary += ['  seed: {}'.format(self.seed)]
        summary += ['  fingerprint: ' + self.fingerprint]
        return '\n'.join(summary) + '\n'
