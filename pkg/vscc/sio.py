"""
Input output functions: checkpoints, knowledge bases and result tables.
"""
from __future__ import division

import os
import json
import hashlib
import warnings

import numpy as np
import pandas as pd
import xarray as xr

from vscc.utils import CheckpointError, atomic_write, code_version

CKPT_MAGIC = b'VSCC-CKPT\n'
CKPT_FORMAT_VERSION = 1

RESULT_COLUMNS = ['method', 'train_snr_db', 'cmc', 'mode', 'test_snr_db',
                  'image', 'psnr_mean', 'psnr_min', 'psnr_max', 'ssim_mean',
                  'ssim_min', 'ssim_max', 'checkpoint_fingerprint',
                  'config_fingerprint', 'code_version']

MANIFEST_COLUMNS = ['cell_id', 'method', 'train_snr_db', 'cmc', 'status',
                    'checkpoint', 'cell_fingerprint', 'data_fingerprint',
                    'config_fingerprint', 'error']


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, 'value'):
        return obj.value
    raise TypeError('not serializable: {!r}'.format(obj))


def _pack(parameters):
    """Concatenate the tensors (sorted names, little endian)."""
    table = []
    chunks = []
    offset = 0
    for name in sorted(parameters):
        a = np.asarray(parameters[name])
        a = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder('<'))
        b = a.tobytes(order='C')
        table.append(dict(name=name, dtype=a.dtype.str, shape=list(a.shape),
                          offset=offset, nbytes=len(b)))
        chunks.append(b)
        offset += len(b)
    return table, b''.join(chunks)


def save_checkpoint(checkpoint, fpath):
    """Write a :py:class:`~vscc.network.Checkpoint` to a file.

    The file is a magic line, a JSON header line (format version,
    architecture, metadata, tensor table and the SHA-256 of the blob) and
    the raw parameter blob. Saving a loaded checkpoint reproduces the file
    byte for byte.
    """
    table, blob = _pack(checkpoint.parameters)
    metadata = dict(checkpoint.metadata)
    metadata.setdefault('code_version', code_version())
    header = dict(format_version=CKPT_FORMAT_VERSION,
                  architecture=checkpoint.architecture.to_dict(),
                  metadata=metadata,
                  tensors=table,
                  blob_nbytes=len(blob),
                  blob_sha256=hashlib.sha256(blob).hexdigest())
    header = json.dumps(header, sort_keys=True, default=_json_default)
    with atomic_write(fpath, mode='wb') as f:
        f.write(CKPT_MAGIC)
        f.write(header.encode('utf-8') + b'\n')
        f.write(blob)
    return fpath


def load_checkpoint(fpath, architecture=None):
    """Read a checkpoint file.

    Parameters
    ----------
    fpath : str
        path to the file
    architecture : ArchitectureConfig, optional
        when given, the checkpoint must fit it

    Returns
    -------
    a :py:class:`~vscc.network.Checkpoint`

    Raises
    ------
    CheckpointError
        missing, truncated or corrupted file, unsupported format version,
        shape mismatch with ``architecture``
    """
    from vscc.network import ArchitectureConfig, Checkpoint

    if not os.path.exists(fpath):
        raise CheckpointError('checkpoint not found: {} (produce it with '
                              '`vscc train` or `vscc sweep`)'.format(fpath))
    with open(fpath, 'rb') as f:
        raw = f.read()
    if not raw.startswith(CKPT_MAGIC):
        raise CheckpointError('not a vscc checkpoint: {}'.format(fpath))
    raw = raw[len(CKPT_MAGIC):]
    nl = raw.find(b'\n')
    if nl < 0:
        raise CheckpointError('truncated checkpoint header: {}'.format(fpath))
    try:
        header = json.loads(raw[:nl].decode('utf-8'))
    except (ValueError, UnicodeDecodeError) as e:
        raise CheckpointError('corrupted checkpoint header in {}: {}'
                              .format(fpath, e))
    version = header.get('format_version')
    if version != CKPT_FORMAT_VERSION:
        raise CheckpointError('unsupported checkpoint format version {} in '
                              '{} (expected {})'
                              .format(version, fpath, CKPT_FORMAT_VERSION))
    blob = raw[nl+1:]
    if len(blob) != header['blob_nbytes']:
        raise CheckpointError('truncated checkpoint {}: {} bytes of '
                              'parameters instead of {}'.format(fpath, len(blob),
                                                     header['blob_nbytes']))
    if hashlib.sha256(blob).hexdigest() != header['blob_sha256']:
        raise CheckpointError('corrupted checkpoint {}: parameter checksum '
                              'mismatch'.format(fpath))

    params = {}
    for t in header['tensors']:
        dt = np.dtype(t['dtype'])
        count = int(np.prod(t['shape'], dtype=np.int64))
        a = np.frombuffer(blob, dtype=dt, count=count, offset=t['offset'])
        params[t['name']] = a.reshape(t['shape']).astype(dt.newbyteorder('='))

    ckpt = Checkpoint(ArchitectureConfig.from_dict(header['architecture']),
                      params, header['metadata'])
    ckpt.check_architecture(ckpt.architecture)
    if architecture is not None:
        ckpt.check_architecture(architecture)
    return ckpt


def save_knowledge_base(kb, fpath):
    """Write a :py:class:`~vscc.datasets.KnowledgeBase` to netCDF."""
    odir = os.path.dirname(os.path.abspath(fpath))
    if not os.path.exists(odir):
        os.makedirs(odir)
    tmp = fpath + '.tmp'
    kb.to_dataset().to_netcdf(tmp)
    os.replace(tmp, fpath)
    return fpath


def open_knowledge_base(fpath, model_fingerprint=None):
    """Read a knowledge base file.

    Parameters
    ----------
    fpath : str
        path to the netCDF file
    model_fingerprint : str, optional
        warn when the file was built with another checkpoint
    """
    from vscc.datasets import KnowledgeBase, KB_FORMAT_VERSION

    if not os.path.exists(fpath):
        raise CheckpointError('knowledge base not found: {} (produce it with '
                              '`vscc kb-build`)'.format(fpath))
    try:
        with xr.open_dataset(fpath) as ds:
            ds = ds.load()
    except Exception as e:
        raise CheckpointError('cannot read knowledge base {}: {}'
                              .format(fpath, e))
    version = int(ds.attrs.get('format_version', -1))
    if version != KB_FORMAT_VERSION:
        raise CheckpointError('unsupported knowledge base format version {} '
                              'in {}'.format(version, fpath))
    kb = KnowledgeBase.from_dataset(ds)
    if model_fingerprint is not None and \
            kb.model_fingerprint != model_fingerprint:
        warnings.warn('knowledge base {} was built with another checkpoint'
                      .format(fpath), RuntimeWarning)
    return kb


def write_table(df, fpath):
    """Write a CSV table atomically."""
    with atomic_write(fpath) as f:
        df.to_csv(f, index=False)
    return fpath


def read_sweep_manifest(fpath):
    """The sweep manifest, or an empty table if there is none yet."""
    if not os.path.exists(fpath):
        return pd.DataFrame(columns=MANIFEST_COLUMNS)
    df = pd.read_csv(fpath, dtype={'cell_id': str, 'error': str})
    for c in MANIFEST_COLUMNS:
        if c not in df:
            df[c] = np.nan
    return df[MANIFEST_COLUMNS]


def read_results(fpaths):
    """Concatenate result tables.

    Returns
    -------
    a DataFrame with :py:data:`RESULT_COLUMNS` (empty if no file is given)
    """
    dfs = []
    for p in fpaths:
        df = pd.read_csv(p)
        missing = set(RESULT_COLUMNS) - set(df.columns)
        if missing:
            raise ValueError('{} is not a results table (missing {})'
                             .format(p, sorted(missing)))
        dfs.append(df[RESULT_COLUMNS])
    if not dfs:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    return pd.concat(dfs, ignore_index=True)
