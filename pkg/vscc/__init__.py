"""
VSCC package
"""
import os
from os import path
from os import makedirs
from functools import wraps

try:
    from .version import version as __version__
except ImportError:  # pragma: no cover
    raise ImportError('vscc is not properly installed. If you are running '
                      'from the source directory, please instead create a '
                      'new virtual environment (using conda or virtualenv) '
                      'and  then install it in-place by running: '
                      'pip install -e .')


def lazy_property(fn):
    """Decorator that makes a property lazy-evaluated."""

    attr_name = '_lazy_' + fn.__name__

    @property
    @wraps(fn)
    def _lazy_property(self):
        if not hasattr(self, attr_name):
            setattr(self, attr_name, fn(self))
        return getattr(self, attr_name)

    return _lazy_property


# Path to the cache directory
cache_dir = os.environ.get('VSCC_CACHE_DIR',
                           path.join(path.expanduser('~'), '.vscc_cache'))
if not path.exists(cache_dir):
    makedirs(cache_dir)

# Directory of the shipped experiment presets
config_dir = path.join(path.dirname(path.abspath(__file__)), 'configs')

# API
from vscc.utils import (ConfigurationError, CheckpointError, DatasetError,
                        TrainingDivergedError)
from vscc.channel import (ChannelConfig, ChannelReport, snr_to_noise_variance,
                          power_normalize, apply_awgn, transmit,
                          measure_empirical_snr)
from vscc.coding import (Method, LatentStats, LossConfig, LossBreakdown,
                         gaussian_kl_channel_matched, reparameterize,
                         reconstruction_nll, vscc_loss, vae_loss, ae_loss,
                         vib_loss, compute_loss)
from vscc.network import (ArchitectureConfig, Checkpoint, JSCCModel,
                          build_encoder, build_decoder, resnet_block,
                          attention_block)
from vscc.datasets import (ImageBatch, ImageCollection, DatasetSplit,
                           KnowledgeBase, load_dataset, normalize,
                           denormalize, build_knowledge_base,
                           make_synthetic_corpus)
from vscc.metrics import SsimConfig, psnr, ssim, aggregate_resamples
from vscc.sio import (save_checkpoint, load_checkpoint, save_knowledge_base,
                      open_knowledge_base)
from vscc.training import TrainConfig, TrainState, SweepGrid, train, sweep
from vscc.evaluation import Mode, EvalConfig, EvalResult, evaluate
from vscc.config import ExperimentConfig
