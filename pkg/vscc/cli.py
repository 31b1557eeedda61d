"""
The ``vscc`` command.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
import os
import re
import sys
import glob
import logging
import argparse
import warnings

import numpy as np

from vscc.utils import (ConfigurationError, CheckpointError, DatasetError,
                        TrainingDivergedError)

logger = logging.getLogger('vscc')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1.

    Negative numbers, ranges and lists ('-10:25:5', '-5,0,inf') are values,
    not options.
    """

    def __init__(self, *args, **kwargs):
        super(_Parser, self).__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r'^-\.?\d[\d.:,inf]*$')

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def _common(p):
    p.add_argument('-c', '--config', default='desk',
                   help='config file, or preset name (desk, full_scale, '
                        'smoke). Default: desk')
    p.add_argument('--set', dest='overrides', action='append', default=[],
                   metavar='SECTION.KEY=VALUE',
                   help='override a config field (repeatable)')
    p.add_argument('-o', '--output-dir', default=None,
                   help='override the output directory')
    p.add_argument('-v', '--verbose', action='store_true',
                   help='debug logging')


def _cell_args(p):
    p.add_argument('--method', choices=['vscc', 'vae', 'ae'])
    p.add_argument('--snr', type=float, help='train SNR (dB)')
    p.add_argument('--cmc', type=float, help='channel matching coefficient')


def build_parser():
    parser = _Parser(prog='vscc', description='Variational source-channel '
                     'coding experiments.')
    sub = parser.add_subparsers(dest='command', metavar='command',
                                parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('train', help='train one model')
    _common(p)
    _cell_args(p)
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--device')
    p.add_argument('--resume', action='store_true',
                   help='continue an interrupted run')

    p = sub.add_parser('sweep', help='train every cell of the sweep grid')
    _common(p)
    p.add_argument('--on-error', choices=['continue', 'fail-fast'])
    p.add_argument('--n-jobs', type=int)

    p = sub.add_parser('kb-build', help='build knowledge bases')
    _common(p)
    _cell_args(p)
    p.add_argument('--checkpoint', help='a checkpoint file (default: every '
                   'vscc/vae cell of the sweep manifest)')

    p = sub.add_parser('eval', help='evaluate checkpoints')
    _common(p)
    _cell_args(p)
    p.add_argument('--checkpoint', help='a checkpoint file (default: every '
                   'cell of the sweep manifest)')
    p.add_argument('--mode', choices=['ae', 'transmission', 'fixed'])
    p.add_argument('--snr-range', help="test SNRs: 'start:stop:step' or "
                   "'a,b,c' (inf: noiseless)")
    p.add_argument('--resamples', type=int)
    p.add_argument('--kb', help='knowledge base file')
    p.add_argument('--kb-granularity', choices=['map', 'scalar'])
    p.add_argument('--no-variance-noise', action='store_true',
                   help='send the variance over a noiseless side channel')

    p = sub.add_parser('report', help='figures and tables of the results')
    _common(p)
    p.add_argument('--allow-mixed', action='store_true',
                   help='accept results of different configs')
    p.add_argument('--format', default='png')

    p = sub.add_parser('metrics', help='PSNR and SSIM of two image files')
    p.add_argument('reference')
    p.add_argument('candidate')
    p.add_argument('-v', '--verbose', action='store_true')
    return parser


def _load_config(args):
    from vscc.config import ExperimentConfig

    cfg = ExperimentConfig.load(args.config).with_overrides(args.overrides)
    cfg = cfg.set(None, 'output_dir', args.output_dir)
    return cfg


def _manifest_cells(cfg, args, methods=None):
    """(cell_id, method, checkpoint path) of the selected manifest cells."""
    from vscc.sio import read_sweep_manifest

    path = os.path.join(cfg.output_dir, 'manifest.csv')
    df = read_sweep_manifest(path)
    df = df[df.status == 'done']
    if len(df) == 0:
        raise CheckpointError('no trained checkpoints in {} (produce them '
                              'with `vscc train` or `vscc sweep`)'
                              .format(path))
    if methods is not None:
        df = df[df.method.isin(methods)]
    if getattr(args, 'method', None):
        df = df[df.method == args.method]
    if getattr(args, 'snr', None) is not None:
        df = df[np.isclose(df.train_snr_db.astype(float), args.snr)]
    if getattr(args, 'cmc', None) is not None:
        df = df[np.isclose(df.cmc.astype(float), args.cmc)]
    if len(df) == 0:
        raise CheckpointError('no checkpoint in {} matches the selection '
                              '(train it with `vscc train`)'.format(path))
    return [(r.cell_id, r.method, r.checkpoint) for r in df.itertuples()]


def _cell_id(fpath):
    return os.path.splitext(os.path.basename(fpath))[0]


def cmd_train(args):
    from vscc.training import SweepGrid, sweep

    cfg = _load_config(args)
    for k, v in [('method', args.method), ('train_snr_db', args.snr),
                 ('cmc', args.cmc), ('epochs', args.epochs),
                 ('device', args.device)]:
        cfg = cfg.set('train', k, v)
    cfg = cfg.set(None, 'seed', args.seed)
    t = cfg.train
    if t['method'] != 'vscc' and args.cmc is not None:
        warnings.warn('cmc is ignored for method ' + t['method'],
                      UserWarning)
    grid = SweepGrid(methods=[t['method']], snrs=[t['train_snr_db']],
                     cmcs=[t['cmc']] if t['method'] == 'vscc' else [])
    data = cfg.load_data()
    base = cfg.train_config(resume=args.resume)
    sweep(grid, base, data, output_dir=cfg.output_dir, on_error='fail-fast',
          config_fingerprint=cfg.fingerprint)
    print(base.checkpoint_path)
    return EXIT_OK


def cmd_sweep(args):
    from vscc.training import sweep

    cfg = _load_config(args)
    cfg = cfg.set('sweep', 'on_error', args.on_error)
    cfg = cfg.set('sweep', 'n_jobs', args.n_jobs)
    data = cfg.load_data()
    manifest = sweep(cfg.sweep_grid(), cfg.train_config(), data,
                     output_dir=cfg.output_dir,
                     on_error=cfg.sweep['on_error'],
                     n_jobs=cfg.sweep['n_jobs'],
                     config_fingerprint=cfg.fingerprint)
    failed = manifest[manifest.status == 'failed']
    print('{} cells, {} failed; manifest in {}'.format(
        len(manifest), len(failed),
        os.path.join(cfg.output_dir, 'manifest.csv')))
    return EXIT_FAILURE if len(failed) else EXIT_OK


def cmd_kb_build(args):
    from vscc.datasets import build_knowledge_base
    from vscc.sio import load_checkpoint, save_knowledge_base

    cfg = _load_config(args)
    if args.checkpoint:
        cells = [(_cell_id(args.checkpoint), None, args.checkpoint)]
    else:
        cells = _manifest_cells(cfg, args, methods=['vscc', 'vae'])
    data = cfg.load_data()
    for cell_id, _, path in cells:
        ckpt = load_checkpoint(path, architecture=cfg.architecture)
        kb = build_knowledge_base(ckpt, data,
                                  batch_size=cfg.eval['batch_size'],
                                  device=cfg.train['device'])
        out = save_knowledge_base(kb, cfg.kb_path(cell_id))
        print(out)
    return EXIT_OK


def cmd_eval(args):
    from vscc.evaluation import Mode, evaluate
    from vscc.sio import load_checkpoint, open_knowledge_base

    cfg = _load_config(args)
    kwargs = {}
    if args.snr_range is not None:
        kwargs['test_snr_db'] = args.snr_range
    if args.resamples is not None:
        kwargs['resample_count'] = args.resamples
    if args.kb_granularity is not None:
        kwargs['kb_granularity'] = args.kb_granularity
    if args.no_variance_noise:
        kwargs['variance_noise'] = False

    if args.checkpoint:
        cells = [(_cell_id(args.checkpoint), None, args.checkpoint)]
    else:
        methods = None
        if args.mode is not None:
            methods = ['ae'] if args.mode == 'ae' else ['vscc', 'vae']
        cells = _manifest_cells(cfg, args, methods=methods)

    data = cfg.load_data()
    for cell_id, _, path in cells:
        ckpt = load_checkpoint(path, architecture=cfg.architecture)
        mode = args.mode or cfg.eval['mode'] or Mode.default_for(ckpt.method)
        Mode(mode).check_method(ckpt.method)
        kb = None
        if Mode(mode) is Mode.FIXED_VARIANCE:
            kb = open_knowledge_base(args.kb or cfg.kb_path(cell_id),
                                     model_fingerprint=ckpt.fingerprint)
        ecfg = cfg.eval_config(mode=mode, knowledge_base=kb, **kwargs)
        res = evaluate(ckpt, data, ecfg, device=cfg.train['device'],
                       config_fingerprint=cfg.fingerprint)
        base = os.path.join(cfg.results_dir, '{}_{}'.format(
            cell_id, Mode(mode).value))
        res.to_csv(base + '.csv', summary_path=base + '_summary.csv')
        res.to_netcdf(base + '.nc')
        print(base + '.csv')
        logger.info('\n%s', res)
    return EXIT_OK


def cmd_report(args):
    import matplotlib
    matplotlib.use('Agg')
    from vscc.graphics import report
    from vscc.sio import read_results

    cfg = _load_config(args)
    files = sorted(f for f in glob.glob(os.path.join(cfg.results_dir,
                                                     '*.csv'))
                   if not f.endswith('_summary.csv'))
    df = read_results(files)
    out = report(df, cfg.figures_dir, allow_mixed=args.allow_mixed,
                 fmt=args.format)
    for f in out:
        print(f)
    return EXIT_OK


def cmd_metrics(args):
    from PIL import Image
    from vscc.metrics import psnr, ssim

    imgs = []
    for p in [args.reference, args.candidate]:
        if not os.path.exists(p):
            raise DatasetError('image not found: ' + p)
        with Image.open(p) as img:
            imgs.append(np.asarray(img.convert('RGB')))
    print('psnr={:.4f} ssim={:.4f}'.format(psnr(*imgs), ssim(*imgs)))
    return EXIT_OK


COMMANDS = {'train': cmd_train, 'sweep': cmd_sweep, 'kb-build': cmd_kb_build,
            'eval': cmd_eval, 'report': cmd_report, 'metrics': cmd_metrics}


def main(argv=None):
    """Run the ``vscc`` command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else
                        logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s: '
                               '%(message)s')
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValueError) as e:
        print('vscc {}: error: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, DatasetError, TrainingDivergedError,
            RuntimeError, OSError) as e:
        print('vscc {}: failure: {}'.format(args.command, e),
              file=sys.stderr)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
