# -*- coding: utf-8 -*-
#
# ligandsense documentation build configuration file.
import os
import sys
sys.path.insert(0, os.path.abspath('../../'))

import sphinx_rtd_theme

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.mathjax',
              'sphinx.ext.napoleon',
              'sphinx.ext.viewcode']

# numpy-style docstrings only
napoleon_google_docstring = False
napoleon_use_param = False
napoleon_use_ivar = True

source_suffix = '.rst'
master_doc = 'index'

project = u'ligandsense'
version = u'0.1'
release = u'0.1'

exclude_patterns = []
pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_theme_options = {
    'collapse_navigation': False,
    'display_version': True,
}
htmlhelp_basename = 'ligandsensedoc'

man_pages = [
    (master_doc, 'ligandsense', u'ligandsense Documentation', [], 1)
]
