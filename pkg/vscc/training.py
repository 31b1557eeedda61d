"""
End-to-end training of the encoder, channel and decoder, and the sweep
driver over (method, train SNR, CMC) grids.
"""
from __future__ import division

import os
import math
import logging
import warnings

import numpy as np
import pandas as pd
import torch
from joblib import Parallel, delayed

from vscc.channel import ChannelConfig
from vscc.coding import Method, LossConfig, compute_loss
from vscc.network import ArchitectureConfig, JSCCModel, Checkpoint
from vscc.sio import (save_checkpoint, read_sweep_manifest, write_table,
                      MANIFEST_COLUMNS)
from vscc.utils import (ConfigurationError, TrainingDivergedError, make_rng,
                        fingerprint, code_version)

logger = logging.getLogger(__name__)

# the grids of the reference experiments
DEFAULT_SNRS = (-5., 5., 15.)
DEFAULT_CMCS = (1., 2., 5., 10., 15.)


def _fmt(v):
    return '{:g}'.format(float(v))


class TrainConfig(object):
    """Parameters of one training run (one sweep cell).

    Attributes
    ----------
    method : Method
    train_snr_db : float
    cmc : float or None
        the channel matching coefficient (VSCC only, None otherwise)
    epochs : int
    batch_size : int
    learning_rate : float
    seed : int
    architecture : ArchitectureConfig
    checkpoint_dir : str
    log_every : int
        log a debug line every n steps (0: never)
    reconstruction_weight : float
    normalize_power : bool
    divergence_patience : int
        number of consecutive non-finite steps before aborting
    device : str
    resume : bool
        continue from the state file of an interrupted run
    """

    def __init__(self, method=Method.VSCC, train_snr_db=5., cmc=None,
                 epochs=20, batch_size=64, learning_rate=1e-4, seed=0,
                 architecture=None, checkpoint_dir='checkpoints', log_every=0,
                 reconstruction_weight=1., normalize_power=True,
                 divergence_patience=10, device='cpu', resume=False):
        self.method = Method(method)
        self.train_snr_db = float(train_snr_db)
        if self.method is Method.VSCC:
            self.cmc = 1. if cmc is None else float(cmc)
        else:
            if cmc is not None:
                warnings.warn('cmc is ignored for method {}'
                              .format(self.method), UserWarning)
            self.cmc = None
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.seed = int(seed)
        if architecture is None:
            architecture = ArchitectureConfig.desk()
        elif isinstance(architecture, dict):
            architecture = ArchitectureConfig.from_dict(architecture)
        self.architecture = architecture.for_method(self.method)
        self.checkpoint_dir = checkpoint_dir
        self.log_every = int(log_every)
        self.reconstruction_weight = float(reconstruction_weight)
        self.normalize_power = bool(normalize_power)
        self.divergence_patience = int(divergence_patience)
        self.device = device
        self.resume = bool(resume)
        self._check_input()

    def _check_input(self):
        if self.epochs < 1:
            raise ConfigurationError('epochs must be >= 1')
        if self.batch_size < 1:
            raise ConfigurationError('batch_size must be >= 1')
        if not self.learning_rate > 0:
            raise ConfigurationError('learning_rate must be > 0')
        if self.divergence_patience < 1:
            raise ConfigurationError('divergence_patience must be >= 1')
        if math.isnan(self.train_snr_db) or self.train_snr_db == -np.inf:
            raise ConfigurationError('train_snr_db not valid')
        # validates the loss parameters
        self.loss_config

    @property
    def channel(self):
        """The training channel."""
        return ChannelConfig(self.train_snr_db,
                             normalize_power=self.normalize_power,
                             seed=self.seed)

    @property
    def loss_config(self):
        return LossConfig(self.method, cmc=1. if self.cmc is None else
                          self.cmc,
                          reconstruction_weight=self.reconstruction_weight,
                          noise_variance=self.channel.noise_variance)

    @property
    def cell_id(self):
        """A file-name friendly identifier of (method, SNR, CMC)."""
        out = '{}_snr{}'.format(self.method.value, _fmt(self.train_snr_db))
        if self.cmc is not None:
            out += '_cmc{}'.format(_fmt(self.cmc))
        return out

    @property
    def checkpoint_path(self):
        return os.path.join(self.checkpoint_dir, self.cell_id + '.ckpt')

    @property
    def state_path(self):
        return os.path.join(self.checkpoint_dir, self.cell_id + '.state')

    def fingerprint(self, data_fingerprint=''):
        """Hash of everything that determines the trained parameters."""
        d = self.to_dict()
        for k in ['checkpoint_dir', 'log_every', 'device', 'resume']:
            d.pop(k)
        return fingerprint(d, data_fingerprint, code_version())

    def to_dict(self):
        return dict(method=self.method.value, train_snr_db=self.train_snr_db,
                    cmc=self.cmc, epochs=self.epochs,
                    batch_size=self.batch_size,
                    learning_rate=self.learning_rate, seed=self.seed,
                    architecture=self.architecture.to_dict(),
                    checkpoint_dir=self.checkpoint_dir,
                    log_every=self.log_every,
                    reconstruction_weight=self.reconstruction_weight,
                    normalize_power=self.normalize_power,
                    divergence_patience=self.divergence_patience,
                    device=self.device, resume=self.resume)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def replace(self, **kwargs):
        """A copy with some fields changed."""
        d = self.to_dict()
        if 'method' in kwargs and Method(kwargs['method']) is not Method.VSCC:
            d['cmc'] = None
        d.update(kwargs)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            return TrainConfig.from_dict(d)

    def __repr__(self):
        summary = ['<vscc.TrainConfig>']
        for k in ['method', 'train_snr_db', 'cmc', 'epochs', 'batch_size',
                  'learning_rate', 'seed']:
            summary += ['  {}: {}'.format(k, self.to_dict()[k])]
        return '\n'.join(summary) + '\n'


class TrainState(object):
    """Progress of a training run.

    Attributes
    ----------
    epoch : int
        number of completed epochs, recorded or skipped
    step : int
        number of optimizer steps attempted
    running_loss : dict
        the loss averages of the last completed epoch
    best_metric : float
        lowest epoch-average total loss so far
    loss_history : list of dict
        the averages of every epoch with at least one finite step
    rng_state : dict
        the random sources (opaque)
    """

    def __init__(self, epoch=0, step=0, running_loss=None,
                 best_metric=np.inf, loss_history=None, rng_state=None):
        self.epoch = int(epoch)
        self.step = int(step)
        self.running_loss = running_loss
        self.best_metric = float(best_metric)
        self.loss_history = list(loss_history or [])
        self.rng_state = rng_state

    def skip_epoch(self):
        """Count an epoch without a finite step; nothing is recorded."""
        self.epoch += 1

    def capture_rng(self, noise_rng, np_rng):
        self.rng_state = dict(noise=noise_rng.get_state(),
                              shuffle=np_rng.bit_generator.state)

    def restore_rng(self, noise_rng, np_rng):
        if not self.rng_state:
            raise ValueError('the state carries no random state')
        noise_rng.set_state(self.rng_state['noise'])
        np_rng.bit_generator.state = self.rng_state['shuffle']

    def end_epoch(self, averages):
        self.epoch += 1
        self.running_loss = averages
        self.loss_history.append(dict(epoch=self.epoch, **averages))
        if averages['total'] < self.best_metric:
            self.best_metric = averages['total']

    def to_dict(self):
        return dict(epoch=self.epoch, step=self.step,
                    running_loss=self.running_loss,
                    best_metric=self.best_metric,
                    loss_history=self.loss_history,
                    rng_state=self.rng_state)


def _init_model(config):
    # the seed fixes the initial weights, identically for VSCC and VAE
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = JSCCModel(config.architecture, config.method)
    return model.to(config.device)


def _metadata(config, state, data_fingerprint, **kwargs):
    out = dict(method=config.method.value, snr_db=config.train_snr_db,
               cmc=config.cmc, epoch=state.epoch, step=state.step,
               seed=config.seed, data_fingerprint=data_fingerprint,
               config_fingerprint=config.fingerprint(data_fingerprint),
               loss_history=state.loss_history,
               train_config=config.to_dict(), code_version=code_version())
    out.update(kwargs)
    return out


def _save_state(path, config_fp, model, optimizer, state, noise_rng,
                np_rng):
    odir = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(odir):
        os.makedirs(odir)
    state.capture_rng(noise_rng, np_rng)
    tmp = path + '.tmp'
    torch.save(dict(fingerprint=config_fp, model=model.state_dict(),
                    optimizer=optimizer.state_dict(),
                    train_state=state.to_dict()), tmp)
    os.replace(tmp, path)


def _load_state(path, config_fp, model, optimizer, noise_rng, np_rng):
    saved = torch.load(path, map_location='cpu')
    if saved['fingerprint'] != config_fp:
        warnings.warn('state file {} belongs to another configuration, '
                      'starting from scratch'.format(path), RuntimeWarning)
        return None
    model.load_state_dict(saved['model'])
    optimizer.load_state_dict(saved['optimizer'])
    state = TrainState(**saved['train_state'])
    state.restore_rng(noise_rng, np_rng)
    return state


def train(config, data):
    """Train a model on the train split of ``data``.

    Every step encodes a batch, draws one latent sample (VSCC, VAE), sends
    it through the AWGN channel of ``config.train_snr_db``, decodes and
    takes an Adam step on the loss of ``config.method``.

    Parameters
    ----------
    config : TrainConfig
        the run parameters
    data : DatasetSplit
        the images (only the train split is used)

    Returns
    -------
    the final :py:class:`~vscc.network.Checkpoint`, also written to
    ``config.checkpoint_path`` when ``config.checkpoint_dir`` is set

    Raises
    ------
    ConfigurationError
        images and architecture do not match
    TrainingDivergedError
        the loss was non-finite for ``divergence_patience`` steps in a row
    """
    data.check_architecture(config.architecture)
    if len(data.train) == 0:
        raise ConfigurationError('no training images')

    model = _init_model(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    noise_rng = make_rng(config.seed, kind='torch')
    np_rng = make_rng(config.seed, kind='numpy')
    channel = config.channel
    loss_config = config.loss_config
    data_fp = data.fingerprint
    config_fp = config.fingerprint(data_fp)

    state = None
    if config.resume and config.checkpoint_dir and \
            os.path.exists(config.state_path):
        state = _load_state(config.state_path, config_fp, model, optimizer,
                            noise_rng, np_rng)
        if state is not None:
            logger.info('%s: resuming after epoch %d', config.cell_id,
                        state.epoch)
    if state is None:
        state = TrainState()

    dtype = next(model.parameters()).dtype
    n_bad = 0
    model.train()
    while state.epoch < config.epochs:
        sums = dict(total=0., channel_matching_term=0.,
                    reconstruction_term=0.)
        n_images = 0
        for batch in data.train.batches(config.batch_size, shuffle=True,
                                        rng=np_rng):
            x = batch.to_tensor(device=config.device, dtype=dtype)
            x_hat, stats = model(x, channel, noise_rng)
            loss = compute_loss(x, x_hat, stats, loss_config)
            state.step += 1
            optimizer.zero_grad()

            if not loss.is_finite():
                n_bad += 1
                logger.warning('%s: non-finite loss at step %d (%s)',
                               config.cell_id, state.step, loss)
                if n_bad >= config.divergence_patience:
                    snapshot = None
                    if config.checkpoint_dir:
                        snapshot = os.path.join(config.checkpoint_dir,
                                                config.cell_id +
                                                '_diverged.ckpt')
                        save_checkpoint(Checkpoint.from_model(
                            model, **_metadata(config, state, data_fp,
                                               diverged=True)), snapshot)
                    raise TrainingDivergedError(
                        '{}: loss non-finite for {} consecutive steps '
                        '(step {}, epoch {})'.format(
                            config.cell_id, n_bad, state.step,
                            state.epoch + 1), snapshot=snapshot)
                continue

            n_bad = 0
            loss.total.backward()
            optimizer.step()
            values = loss.to_dict()
            for k in sums:
                sums[k] += values[k] * len(batch)
            n_images += len(batch)
            if config.log_every and state.step % config.log_every == 0:
                logger.debug('%s: step=%d %s', config.cell_id, state.step,
                             ' '.join('{}={:.6g}'.format(k, v)
                                      for k, v in values.items()))

        if n_images == 0:
            state.skip_epoch()
            logger.warning('%s: epoch=%d step=%d has no finite loss, not '
                           'recorded', config.cell_id, state.epoch, state.step)
        else:
            averages = {k: v / n_images for k, v in sums.items()}
            state.end_epoch(averages)
            logger.info('%s: epoch=%d step=%d total=%.6g '
                        'channel_matching_term=%.6g reconstruction_term=%.6g',
                        config.cell_id, state.epoch, state.step,
                        averages['total'], averages['channel_matching_term'],
                        averages['reconstruction_term'])
        if config.checkpoint_dir:
            _save_state(config.state_path, config_fp, model, optimizer,
                        state, noise_rng, np_rng)

    model.eval()
    ckpt = Checkpoint.from_model(model, **_metadata(config, state, data_fp))
    if config.checkpoint_dir:
        save_checkpoint(ckpt, config.checkpoint_path)
        logger.info('%s: checkpoint written to %s', config.cell_id,
                    config.checkpoint_path)
    return ckpt


class SweepGrid(object):
    """The (method, train SNR, CMC) cells of a sweep.

    VSCC is trained for every (SNR, CMC) pair, VAE and AE once per SNR.

    Examples
    --------
    >>> len(SweepGrid().cells())
    21
    """

    def __init__(self, methods=('vscc', 'vae', 'ae'), snrs=DEFAULT_SNRS,
                 cmcs=DEFAULT_CMCS):
        self.methods = [Method(m) for m in methods]
        self.snrs = [float(s) for s in snrs]
        self.cmcs = [float(c) for c in (cmcs or [])]
        if not self.methods or not self.snrs:
            raise ConfigurationError('the sweep grid is empty')
        if Method.VSCC in self.methods and not self.cmcs:
            raise ConfigurationError('vscc cells need at least one cmc')
        if Method.VSCC not in self.methods and self.cmcs:
            warnings.warn('cmc values are ignored for methods {}'.format(
                ', '.join(m.value for m in self.methods)), UserWarning)

    def cells(self):
        """List of (method, snr_db, cmc) tuples, cmc None for VAE and AE."""
        out = []
        for m in self.methods:
            for s in self.snrs:
                if m is Method.VSCC:
                    out += [(m, s, c) for c in self.cmcs]
                else:
                    out.append((m, s, None))
        return out

    def to_dict(self):
        return dict(methods=[m.value for m in self.methods], snrs=self.snrs,
                    cmcs=self.cmcs)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _run_cell(config, data):
    """Train one cell; never raises (the error is returned)."""
    row = dict(cell_id=config.cell_id, method=config.method.value,
               train_snr_db=config.train_snr_db, cmc=config.cmc,
               checkpoint=config.checkpoint_path,
               cell_fingerprint=config.fingerprint(data.fingerprint),
               data_fingerprint=data.fingerprint, error='')
    try:
        train(config, data)
        row['status'] = 'done'
        return row, None
    except Exception as e:
        logger.error('%s: training failed: %s', config.cell_id, e)
        row['status'] = 'failed'
        row['error'] = '{}: {}'.format(type(e).__name__, e)
        return row, e


def sweep(grid, base, data, output_dir='.', on_error='continue', n_jobs=1,
          config_fingerprint=''):
    """Train every cell of a grid.

    Completed cells (same cell fingerprint, checkpoint on disk) are
    skipped, so that a sweep can be rerun or resumed at will.

    Parameters
    ----------
    grid : SweepGrid
        the cells
    base : TrainConfig
        the parameters shared by all cells
    data : DatasetSplit
        the images
    output_dir : str
        checkpoints go to ``output_dir/checkpoints``, the manifest to
        ``output_dir/manifest.csv``
    on_error : str
        'continue' records failed cells and goes on, 'fail-fast' raises the
        first error
    n_jobs : int
        number of cells trained concurrently (joblib)
    config_fingerprint : str
        fingerprint of the experiment config, recorded in the manifest

    Returns
    -------
    the manifest (pandas DataFrame, one row per cell)
    """
    if on_error not in ['continue', 'fail-fast']:
        raise ConfigurationError('on_error must be continue or fail-fast')
    ckpt_dir = os.path.join(output_dir, 'checkpoints')
    manifest_path = os.path.join(output_dir, 'manifest.csv')
    manifest = read_sweep_manifest(manifest_path)
    done = {r.cell_id: r for r in manifest.itertuples()
            if r.status == 'done'}

    configs = [base.replace(method=m.value, train_snr_db=s, cmc=c,
                            checkpoint_dir=ckpt_dir)
               for m, s, c in grid.cells()]
    ids = [cfg.cell_id for cfg in configs]
    # cells of other grids stay in the manifest
    others = manifest[~manifest.cell_id.isin(ids)]
    rows = {}
    todo = []
    for cfg in configs:
        prev = done.get(cfg.cell_id)
        if prev is not None and \
                prev.cell_fingerprint == cfg.fingerprint(data.fingerprint) \
                and os.path.exists(cfg.checkpoint_path):
            logger.info('%s: up to date, skipped', cfg.cell_id)
            rows[cfg.cell_id] = prev._asdict()
        else:
            todo.append(cfg)

    def _record(row):
        row['config_fingerprint'] = config_fingerprint
        rows[row['cell_id']] = row
        df = pd.DataFrame([rows[i] for i in ids if i in rows])
        for c in MANIFEST_COLUMNS:
            if c not in df:
                df[c] = ''
        df = pd.concat([others, df[MANIFEST_COLUMNS]], ignore_index=True)
        write_table(df, manifest_path)

    if n_jobs == 1:
        for cfg in todo:
            row, err = _run_cell(cfg, data)
            _record(row)
            if err is not None and on_error == 'fail-fast':
                raise err
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(cfg, data)
                                      for cfg in todo)
        for row, _ in out:
            _record(row)
        errors = [e for _, e in out if e is not None]
        if errors and on_error == 'fail-fast':
            raise errors[0]

    manifest = read_sweep_manifest(manifest_path)
    n_failed = int((manifest.status == 'failed').sum())
    logger.info('sweep: %d cells, %d trained, %d failed', len(configs),
                len(todo), n_failed)
    return manifest
