import re
from setuptools import setup


def find_version(filename):
    _version_re = re.compile(r"__version__ = ['\"](.*)['\"]")
    last = None  # match python semantics
    for line in open(filename):
        version_match = _version_re.match(line)
        if version_match:
            last = version_match.group(1)

    return last


__version__ = find_version('cxrseg/__init__.py')

with open('README.md', 'rt') as f:
    long_description = f.read()

tests_require = ['pytest', 'pytest-runner']
setup(name='cxrseg',
      version=__version__,
      description='residual convolutional and recurrent networks for lung segmentation of chest x-rays',
      long_description=long_description,
      long_description_content_type='text/markdown',
      license='MIT',
      classifiers=[
          'Development Status :: 3 - Alpha',
          'License :: OSI Approved :: MIT License',
          'Programming Language :: Python :: 3.8',
          'Programming Language :: Python :: 3.9',
          'Programming Language :: Python :: 3.10',
          'Programming Language :: Python :: 3.11',
          'Programming Language :: Python :: Implementation :: CPython',
          'Operating System :: POSIX :: Linux',
          'Operating System :: MacOS :: MacOS X',
          'Operating System :: Microsoft :: Windows',
      ],
      keywords='segmentation chest x-ray lung residual convolution lstm tanimoto dice',
      packages=['cxrseg'],
      package_data={'cxrseg': ['auth-config.py']},
      python_requires='>=3.8',
      tests_require=tests_require,
      install_requires=[
          'docopt',
          'jsonschema>=3.0.1',  # need the draft 6 validator
          'numpy>=1.17',  # SeedSequence
          'orthauth',
          'pypng',
          'pyontutils>=0.1.32',
          'scipy',
          'terminaltables',
      ],
      extras_require={'dev': ['wheel'],
                      'test': tests_require},
      scripts=[],
      entry_points={
          'console_scripts': [
              'cxrseg=cxrseg.cli:main',
          ],
      },
)
