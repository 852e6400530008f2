from setuptools import setup

NAME = "ligandsense"
VERSION = "0.1"
DESCR = "Multi-ligand concentration estimation from receptor dwell times"
URL = ""
REQUIRES = ['numpy', 'scipy', 'coloredlogs', 'pyyaml', 'pandas', 'matplotlib']
TESTS_REQUIRE = ['pytest', 'hypothesis']
DOCS_REQUIRE = ['sphinx', 'sphinx_rtd_theme']

AUTHOR = ""
EMAIL = ""

LICENSE = "MIT"

SRC_DIR = "ligandsense"
PACKAGES = [SRC_DIR]

ENTRY_POINTS = {
    "console_scripts": ["ligandsense = ligandsense.cli:main"],
}

if __name__ == "__main__":
    setup(install_requires=REQUIRES,
          tests_require=TESTS_REQUIRE,
          extras_require={"test": TESTS_REQUIRE, "docs": DOCS_REQUIRE},
          packages=PACKAGES,
          zip_safe=False,
          name=NAME,
          version=VERSION,
          description=DESCR,
          author=AUTHOR,
          author_email=EMAIL,
          url=URL,
          license=LICENSE,
          entry_points=ENTRY_POINTS,
          )
