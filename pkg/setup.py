"""Setup file for the vscc package.

   Adapted from the Python Packaging Authority template and also from xarray's.
"""

from setuptools import setup, find_packages
from codecs import open
from os import path, walk
import re
import warnings

MAJOR = 0
MINOR = 1
MICRO = 0
ISRELEASED = False
VERSION = '%d.%d.%d' % (MAJOR, MINOR, MICRO)
QUALIFIER = ''

DISTNAME = 'vscc'
LICENSE = '3-clause BSD'
AUTHOR = 'vscc developers'
AUTHOR_EMAIL = ''
URL = 'https://vscc.readthedocs.io'
CLASSIFIERS = [
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Communications',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ]

DESCRIPTION = 'Variational source-channel coding for image transmission'
with open('README.rst') as file:
    LONG_DESCRIPTION = file.read()

# version string from git describe, as pandas and xarray do
FULLVERSION = VERSION
write_version = True

if not ISRELEASED:
    import subprocess
    FULLVERSION += '.dev'
    try:
        rev = subprocess.check_output(
            ['git', 'describe', '--always', '--match', 'v[0-9]*'],
            stderr=subprocess.DEVNULL).strip().decode('ascii')
    except (OSError, subprocess.CalledProcessError):
        rev = None

    if rev is None:
        # no git, or not in a git checkout
        write_version = not path.exists('vscc/version.py')
        warnings.warn("Couldn't get git revision, using {}".format(
            'generic version string' if write_version
            else 'existing vscc/version.py'))
    else:
        if not rev.startswith('v') and re.match('[a-zA-Z0-9]{7,9}', rev):
            # shallow clone without tags
            rev = 'v%s.dev-%s' % (VERSION, rev)
        FULLVERSION = rev.lstrip('v')
else:
    FULLVERSION += QUALIFIER


def write_version_py(filename=None):
    if not filename:
        filename = path.join(path.dirname(__file__), 'vscc', 'version.py')
    with open(filename, 'w') as f:
        f.write("version = '{}'\nshort_version = '{}'\n".format(FULLVERSION,
                                                               VERSION))


if write_version:
    write_version_py()


def file_walk(top, remove=''):
    """Files below ``top``, relative to ``remove``."""
    top = top.replace('/', path.sep)
    remove = remove.replace('/', path.sep)
    for root, _, files in walk(top):
        for file in files:
            yield path.join(root, file).replace(remove, '')


setup(
    name=DISTNAME,
    version=FULLVERSION,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    python_requires='>=3.8',
    url=URL,
    author=AUTHOR,
    author_email=AUTHOR_EMAIL,
    license=LICENSE,
    classifiers=CLASSIFIERS,
    keywords=['joint source-channel coding', 'semantic communication',
              'variational autoencoder', 'AWGN'],
    packages=find_packages(exclude=['docs']),
    install_requires=['numpy', 'scipy', 'pandas', 'xarray', 'netCDF4',
                      'joblib', 'torch', 'PyYAML', 'Pillow', 'matplotlib'],
    extras_require={'test': ['pytest', 'scikit-image'],
                    'cifar': ['torchvision']},
    # preset experiment files
    package_data={'vscc': list(file_walk('vscc/configs', remove='vscc/'))},
    entry_points={'console_scripts': ['vscc = vscc.cli:main']},
)
