"""
The joint encoder and decoder.

The encoder is a convolutional stem followed by one ResNet block and one
stride-2 downsampling per stage, three ResNet blocks and an attention block
at the last width, and a latent head (GroupNorm, Swish, two convolutions).
The second head convolution is the 1x1 "pre-channel" layer adapting the
encoded vector to the channel. The decoder mirrors it: a 1x1 post-channel
layer, a width-raising convolution, two ResNet blocks and an attention
block, one ResNet block and one nearest-neighbour upsampling per stage,
two refinement blocks and a Tanh output.

In VSCC/VAE mode the head emits 2k channels (mean and log-variance), in AE
mode k channels. Everything else is identical.
"""
import copy
import math
from collections import OrderedDict

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from vscc import lazy_property
from vscc.channel import transmit
from vscc.coding import Method, LatentStats, reparameterize
from vscc.utils import ConfigurationError, CheckpointError, fingerprint


class ArchitectureConfig(object):
    """Shape parameters of the encoder/decoder pair.

    Attributes
    ----------
    image_size
    input_channels
    stage_widths
    latent_channels
    groupnorm_group_size
    attention_enabled
    emit_variance
    latent_size
    latent_shape
    """

    def __init__(self, image_size=256, input_channels=3,
                 stage_widths=(32, 64, 128, 192), latent_channels=16,
                 groupnorm_group_size=32, attention_enabled=True,
                 emit_variance=True):
        """Instanciate.

        Parameters
        ----------
        image_size : int
            height and width of the (square) images, in pixels
        input_channels : int
            number of image channels
        stage_widths : list of int
            feature width of each down/upsampling stage
        latent_channels : int
            number of channels k of the encoded vector
        groupnorm_group_size : int
            number of channels per normalization group
        attention_enabled : bool
            whether the attention blocks are built
        emit_variance : bool
            whether the encoder emits a log-variance map (VSCC, VAE)
        """
        self.image_size = int(image_size)
        self.input_channels = int(input_channels)
        self.stage_widths = [int(w) for w in stage_widths]
        self.latent_channels = int(latent_channels)
        self.groupnorm_group_size = int(groupnorm_group_size)
        self.attention_enabled = bool(attention_enabled)
        self.emit_variance = bool(emit_variance)
        self._check_input()

    def _check_input(self):
        if len(self.stage_widths) == 0:
            raise ConfigurationError('at least one stage is needed')
        if min(self.stage_widths + [self.input_channels,
                                    self.latent_channels,
                                    self.groupnorm_group_size]) < 1:
            raise ConfigurationError('widths and channels must be positive')
        factor = 2 ** len(self.stage_widths)
        if self.image_size < factor or self.image_size % factor != 0:
            raise ConfigurationError('image_size ({}) must be divisible by '
                                     '2**n_stages ({})'
                                     .format(self.image_size, factor))

    @classmethod
    def desk(cls, **kwargs):
        """The CPU-tractable preset: 32x32 images, 2 stages, k=4."""
        d = dict(image_size=32, stage_widths=(32, 64), latent_channels=4)
        d.update(kwargs)
        return cls(**d)

    @classmethod
    def full_scale(cls, **kwargs):
        """256x256 images, 4 stages of widths 32/64/128/192, k=16."""
        d = dict(image_size=256, stage_widths=(32, 64, 128, 192),
                 latent_channels=16)
        d.update(kwargs)
        return cls(**d)

    @property
    def n_stages(self):
        return len(self.stage_widths)

    @property
    def latent_size(self):
        """Spatial size (per side) of the encoded vector."""
        return self.image_size // 2 ** self.n_stages

    @property
    def latent_shape(self):
        return (self.latent_channels, self.latent_size, self.latent_size)

    @property
    def head_channels(self):
        f = 2 if self.emit_variance else 1
        return f * self.latent_channels

    def symbols_per_image(self, transmit_variance=False):
        """Number of channel symbols used per image."""
        n = self.latent_channels * self.latent_size ** 2
        return 2 * n if transmit_variance else n

    def bandwidth_ratio(self, transmit_variance=False):
        """Channel symbols per source pixel value (k/n).

        Examples
        --------
        >>> '{:.4f}'.format(ArchitectureConfig().bandwidth_ratio())
        '0.0208'
        """
        n = self.image_size ** 2 * self.input_channels
        return self.symbols_per_image(transmit_variance) / n

    def for_method(self, method):
        """A copy with the latent head matching the training method."""
        out = copy.deepcopy(self)
        out.emit_variance = Method(method).emits_variance
        return out

    def to_dict(self):
        return dict(image_size=self.image_size,
                    input_channels=self.input_channels,
                    stage_widths=list(self.stage_widths),
                    latent_channels=self.latent_channels,
                    groupnorm_group_size=self.groupnorm_group_size,
                    attention_enabled=self.attention_enabled,
                    emit_variance=self.emit_variance)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def __eq__(self, other):
        return isinstance(other, ArchitectureConfig) and \
            self.to_dict() == other.to_dict()

    def __repr__(self):
        summary = ['<vscc.ArchitectureConfig>']
        for k, v in self.to_dict().items():
            summary += ['  {}: {}'.format(k, v)]
        summary += ['  latent_shape: {}'.format(self.latent_shape)]
        return '\n'.join(summary) + '\n'


def swish(t):
    """Swish(t) = t / (1 + exp(-t))."""
    return t * torch.sigmoid(t)


def num_groups(width, group_size=32):
    """Number of GroupNorm groups for a width (group_size channels each).

    Examples
    --------
    >>> num_groups(64)
    2
    >>> num_groups(3)
    1
    """
    groups = max(1, width // group_size)
    while width % groups:
        groups -= 1
    return groups


def _norm(width, group_size):
    return nn.GroupNorm(num_groups(width, group_size), width, eps=1e-6)


class ResnetBlock(nn.Module):
    """Two (GroupNorm, Swish, 3x3 convolution) units plus a residual path.

    The residual path is a 1x1 convolution when the width changes.
    """

    def __init__(self, width_in, width_out, group_size=32):
        super(ResnetBlock, self).__init__()
        if width_in < 1 or width_out < 1:
            raise ConfigurationError('widths must be positive')
        self.width_in = width_in
        self.width_out = width_out
        self.norm1 = _norm(width_in, group_size)
        self.conv1 = nn.Conv2d(width_in, width_out, 3, padding=1)
        self.norm2 = _norm(width_out, group_size)
        self.conv2 = nn.Conv2d(width_out, width_out, 3, padding=1)
        if width_in != width_out:
            self.skip = nn.Conv2d(width_in, width_out, 1)
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        h = self.conv1(swish(self.norm1(x)))
        h = self.conv2(swish(self.norm2(h)))
        return self.skip(x) + h


class AttentionBlock(nn.Module):
    """Single-head self-attention over the spatial positions.

    Q, K and V are 1x1 convolutions of the normalized input; the output is
    softmax(Q K^T / sqrt(d_k)) V, projected by a 1x1 convolution and added
    to the input.
    """

    def __init__(self, width, group_size=32):
        super(AttentionBlock, self).__init__()
        if width < 1:
            raise ConfigurationError('width must be positive')
        self.width = width
        self.norm = _norm(width, group_size)
        self.q = nn.Conv2d(width, width, 1)
        self.k = nn.Conv2d(width, width, 1)
        self.v = nn.Conv2d(width, width, 1)
        self.proj_out = nn.Conv2d(width, width, 1)

    def _qkv(self, x):
        h = self.norm(x)
        return self.q(h), self.k(h), self.v(h)

    @staticmethod
    def _weights(q, k):
        b, c, hh, ww = q.shape
        q = q.reshape(b, c, hh * ww).permute(0, 2, 1)
        k = k.reshape(b, c, hh * ww)
        return torch.softmax(torch.bmm(q, k) / math.sqrt(c), dim=2)

    def attention_weights(self, x):
        """The [N, hw, hw] attention matrix (rows are query positions)."""
        q, k, _ = self._qkv(x)
        return self._weights(q, k)

    def attend(self, x):
        """softmax(Q K^T / sqrt(d_k)) V, before the output projection."""
        q, k, v = self._qkv(x)
        w = self._weights(q, k)
        b, c, hh, ww = v.shape
        out = torch.bmm(v.reshape(b, c, hh * ww), w.permute(0, 2, 1))
        return out.reshape(b, c, hh, ww)

    def forward(self, x):
        return x + self.proj_out(self.attend(x))


class Downsample(nn.Module):
    """Stride-2 3x3 convolution."""

    def __init__(self, width):
        super(Downsample, self).__init__()
        self.conv = nn.Conv2d(width, width, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    """Nearest-neighbour x2 upsampling followed by a 3x3 convolution."""

    def __init__(self, width):
        super(Upsample, self).__init__()
        self.conv = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2., mode='nearest'))


def resnet_block(width_in, width_out, group_size=32):
    """Build a :py:class:`ResnetBlock`."""
    return ResnetBlock(width_in, width_out, group_size=group_size)


def attention_block(width, group_size=32):
    """Build an :py:class:`AttentionBlock`."""
    return AttentionBlock(width, group_size=group_size)


class EncoderOutput(object):
    """What the joint encoder produces for a batch.

    Attributes
    ----------
    stats : LatentStats or None
        mean and log-variance maps (VSCC, VAE)
    latent : tensor or None
        the plain latent (AE)
    """

    def __init__(self, stats=None, latent=None):
        if (stats is None) == (latent is None):
            raise ValueError('exactly one of stats and latent is needed')
        self.stats = stats
        self.latent = latent

    @property
    def symbols(self):
        """The map that is sent through the channel by default."""
        return self.latent if self.stats is None else self.stats.mean

    @property
    def shape(self):
        return tuple(self.symbols.shape)


class Encoder(nn.Module):
    """The joint encoder (see module docstring)."""

    def __init__(self, config):
        super(Encoder, self).__init__()
        self.config = config
        gs = config.groupnorm_group_size
        widths = config.stage_widths
        self.stem = nn.Conv2d(config.input_channels, widths[0], 3, padding=1)
        down = []
        prev = widths[0]
        for w in widths:
            down.append(nn.Sequential(ResnetBlock(prev, w, gs), Downsample(w)))
            prev = w
        self.down = nn.Sequential(*down)
        attn = AttentionBlock(prev, gs) if config.attention_enabled else \
            nn.Identity()
        self.mid = nn.Sequential(ResnetBlock(prev, prev, gs),
                                 ResnetBlock(prev, prev, gs),
                                 attn,
                                 ResnetBlock(prev, prev, gs))
        self.norm_out = _norm(prev, gs)
        self.conv_out = nn.Conv2d(prev, config.head_channels, 3, padding=1)
        self.pre_channel = nn.Conv2d(config.head_channels,
                                     config.head_channels, 1)

    def forward(self, x):
        h = self.mid(self.down(self.stem(x)))
        h = self.pre_channel(self.conv_out(swish(self.norm_out(h))))
        if self.config.emit_variance:
            mean, log_variance = torch.chunk(h, 2, dim=1)
            return EncoderOutput(stats=LatentStats(mean, log_variance))
        return EncoderOutput(latent=h)


class Decoder(nn.Module):
    """The joint decoder (see module docstring)."""

    def __init__(self, config):
        super(Decoder, self).__init__()
        self.config = config
        gs = config.groupnorm_group_size
        widths = config.stage_widths
        k = config.latent_channels
        prev = widths[-1]
        self.post_channel = nn.Conv2d(k, k, 1)
        self.conv_in = nn.Conv2d(k, prev, 3, padding=1)
        attn = AttentionBlock(prev, gs) if config.attention_enabled else \
            nn.Identity()
        self.mid = nn.Sequential(ResnetBlock(prev, prev, gs),
                                 ResnetBlock(prev, prev, gs),
                                 attn)
        up = []
        for w in reversed(widths):
            up.append(nn.Sequential(ResnetBlock(prev, w, gs), Upsample(w)))
            prev = w
        self.up = nn.Sequential(*up)
        self.tail = nn.Sequential(ResnetBlock(prev, prev, gs),
                                  ResnetBlock(prev, prev, gs))
        self.norm_out = _norm(prev, gs)
        self.conv_out = nn.Conv2d(prev, config.input_channels, 3, padding=1)

    def forward(self, z):
        h = self.conv_in(self.post_channel(z))
        h = self.tail(self.up(self.mid(h)))
        return torch.tanh(self.conv_out(swish(self.norm_out(h))))


def build_encoder(config):
    """Build the joint encoder of an architecture."""
    config._check_input()
    return Encoder(config)


def build_decoder(config):
    """Build the joint decoder of an architecture."""
    config._check_input()
    return Decoder(config)


class JSCCModel(nn.Module):
    """Encoder, channel and decoder, trained end to end.

    Parameters
    ----------
    architecture : ArchitectureConfig
        the shapes (the latent head is set from ``method``)
    method : Method
        VSCC, VAE or AE
    """

    def __init__(self, architecture, method):
        super(JSCCModel, self).__init__()
        self.method = Method(method)
        self.architecture = architecture.for_method(self.method)
        self.encoder = build_encoder(self.architecture)
        self.decoder = build_decoder(self.architecture)

    def encode(self, x):
        """Normalized images [N, C, H, W] to an :py:class:`EncoderOutput`."""
        if tuple(x.shape[1:]) != (self.architecture.input_channels,
                                  self.architecture.image_size,
                                  self.architecture.image_size):
            raise ConfigurationError('input of shape {} does not match the '
                                     'architecture'.format(tuple(x.shape)))
        return self.encoder(x)

    def decode(self, z):
        """Received latents [N, k, h, w] to normalized images in (-1, 1)."""
        return self.decoder(z)

    def forward(self, x, channel, rng):
        """One training pass: encode, sample, transmit, decode.

        VSCC and VAE draw a single latent sample y ~ N(mu, s) and send it
        through the channel; AE sends its latent directly.

        Parameters
        ----------
        x : tensor
            normalized images
        channel : ChannelConfig
            the training channel
        rng : torch.Generator
            source of the latent and channel noise

        Returns
        -------
        (reconstruction, stats) where stats is None for AE
        """
        out = self.encode(x)
        if out.stats is None:
            return self.decode(transmit(out.latent, channel, rng)), None
        y = reparameterize(out.stats.mean, out.stats.variance, rng)
        return self.decode(transmit(y, channel, rng)), out.stats

    def count_parameters(self):
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


class Checkpoint(object):
    """A trained model: architecture, parameters and training metadata.

    Attributes
    ----------
    architecture : ArchitectureConfig
    parameters : OrderedDict of name -> np.ndarray
    metadata : dict
        method, snr_db, cmc, epoch, seed, data_fingerprint, loss_history,
        and anything else the trainer records
    """

    def __init__(self, architecture, parameters, metadata=None):
        self.architecture = architecture
        self.parameters = OrderedDict((k, np.ascontiguousarray(v)) for k, v
                                      in sorted(parameters.items()))
        self.metadata = dict(metadata or {})
        if 'method' not in self.metadata:
            raise CheckpointError('checkpoint metadata needs a method')

    @classmethod
    def from_model(cls, model, **metadata):
        params = OrderedDict((k, v.detach().cpu().numpy().copy()) for k, v
                             in model.state_dict().items())
        metadata['method'] = model.method.value
        return cls(model.architecture, params, metadata)

    @property
    def method(self):
        return Method(self.metadata['method'])

    @lazy_property
    def fingerprint(self):
        """Content hash of the architecture and the parameters."""
        return fingerprint(self.architecture.to_dict(),
                           list(self.parameters.items()))

    def check_architecture(self, architecture):
        """Raise a CheckpointError listing every tensor whose shape differs
        from what ``architecture`` would build."""
        expected = JSCCModel(architecture, self.method).state_dict()
        problems = []
        for k, v in expected.items():
            if k not in self.parameters:
                problems.append('{}: missing'.format(k))
            elif tuple(v.shape) != self.parameters[k].shape:
                problems.append('{}: expected {}, found {}'.format(
                    k, tuple(v.shape), self.parameters[k].shape))
        for k in self.parameters:
            if k not in expected:
                problems.append('{}: unexpected'.format(k))
        if problems:
            raise CheckpointError('checkpoint does not match the architecture '
                                  '(shape mismatch):\n  ' +
                                  '\n  '.join(problems))

    def to_model(self, device='cpu', dtype=torch.float32):
        """Rebuild the :py:class:`JSCCModel` (in eval mode)."""
        self.check_architecture(self.architecture)
        model = JSCCModel(self.architecture, self.method)
        state = OrderedDict((k, torch.from_numpy(v.copy())) for k, v
                            in self.parameters.items())
        model.load_state_dict(state)
        return model.to(device=device, dtype=dtype).eval()

    def __repr__(self):
        summary = ['<vscc.Checkpoint>']
        summary += ['  method: ' + self.method.value]
        for k in ['snr_db', 'cmc', 'epoch', 'seed']:
            if k in self.metadata:
                summary += ['  {}: {}'.format(k, self.metadata[k])]
        summary += ['  latent_shape: {}'.format(
            self.architecture.latent_shape)]
        return '\n'.join(summary) + '\n'
