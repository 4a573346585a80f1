# -*- coding: utf-8 -*-
#
# hotspot-forge documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

# Sphinx doesn't produce a useful "module index" for hotspot-forge
html_use_modindex = False

doctest_global_setup = """
import hotspot_forge
from hotspot_forge import geometry, rbm
"""

html_theme_options = {'collapsiblesidebar': True}

import sys, os

sys.path[0:0] = [os.path.abspath('..')]

import hotspot_forge

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.doctest', 'sphinx.ext.todo',
              'sphinx.ext.coverage', 'sphinx.ext.viewcode',
              'sphinx.ext.mathjax']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = u'hotspot-forge'
copyright = u'2026, the hotspot-forge developers'

version = hotspot_forge.version
release = hotspot_forge.version

exclude_patterns = ['_build']

pygments_style = 'sphinx'

autodoc_member_order = 'bysource'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'

html_static_path = []

htmlhelp_basename = 'hotspotforgedoc'

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'hotspot-forge', u'hotspot-forge Documentation',
     [u'the hotspot-forge developers'], 1)
]
