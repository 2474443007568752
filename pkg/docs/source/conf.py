# -*- coding: utf-8 -*-
#
# sheaf_diffusion documentation build configuration file.

import sys
import os

import sphinx_rtd_theme

sys.path.append(os.path.abspath("../.."))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.napoleon',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'sheaf_diffusion'
copyright = u'2026, sheaf_diffusion developers'

version = '0.1'
release = '0.1'

exclude_patterns = []
pygments_style = 'sphinx'

# Google style docstrings only.
napoleon_numpy_docstring = False

# The docs build without a cluster toolkit installed.
autodoc_mock_imports = ["execo", "execo_engine"]

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = ['_static']
htmlhelp_basename = 'sheaf_diffusiondoc'

# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'sheaf_diffusion', u'sheaf_diffusion Documentation',
     [u'sheaf_diffusion developers'], 1)
]
