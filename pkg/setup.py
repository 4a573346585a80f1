from setuptools import setup

classifiers = """\
Intended Audience :: Science/Research
License :: OSI Approved :: Apache Software License
Development Status :: 3 - Alpha
Natural Language :: English
Programming Language :: Python :: 3
Programming Language :: Python :: 3.8
Programming Language :: Python :: 3.9
Programming Language :: Python :: 3.10
Programming Language :: Python :: 3.11
Operating System :: MacOS :: MacOS X
Operating System :: Unix
Programming Language :: Python
Programming Language :: Python :: Implementation :: CPython
Topic :: Scientific/Engineering :: Mathematics
"""

description = ('Numerical verification of an interior hot spot for the '
               'second Neumann eigenfunction of a planar domain.')

with open("README.rst") as f:
    long_description = f.read()

setup(name='hotspot-forge',
      version='0.1.0',
      packages=['hotspot_forge'],
      description=description,
      long_description=long_description,
      install_requires=[
          'tornado >= 5',
          'numpy >= 1.17',
          'scipy >= 1.4',
          'meshpy >= 2020.1',
          'shapely >= 2.0',
      ],
      python_requires='>=3.8',
      license='http://www.apache.org/licenses/LICENSE-2.0',
      classifiers=[c for c in classifiers.split('\n') if c],
      keywords='neumann eigenfunction hot spots finite elements '
               'reflected brownian motion',
      entry_points={
          'console_scripts': ['hotspot-forge = hotspot_forge.cli:main'],
      },
      test_suite='test',
)
