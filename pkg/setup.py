#!/usr/bin/env python

from setuptools import setup

setup(
  name="sheaf_diffusion",
  version="0.1",

  packages=["sheaf_diffusion", "sheaf_diffusion/engine"],
  scripts=["scripts/sheafdiff"],

  install_requires=["execo", "networkx", "numpy", "scipy",
                    "tomli; python_version < '3.11'"],
  extras_require={"test": ["pytest"]},

  description="Synchronous and partially asynchronous diffusion on cellular "
              "sheaves, with the experiments that measure its convergence.",
  license="BSD",
  keywords="sheaf laplacian diffusion asynchronous consensus execo",
)
