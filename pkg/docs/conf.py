# Sphinx configuration of the MKFPose documentation.
import os
import sys

sys.path.insert(0, os.path.abspath('../'))

project = 'MKFPose'
copyright = '2026, MKFPose developers'
author = 'MKFPose developers'
release = '0.1.0'
version = '0.1'

# numpydoc-style sections are rendered by napoleon
extensions = ['sphinx.ext.autodoc', 'sphinx.ext.napoleon', 'sphinx.ext.mathjax']
napoleon_google_docstring = False
napoleon_use_admonition_for_notes = True
autodoc_member_order = 'bysource'

exclude_patterns = ['_build']

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'MKFPosedoc'
pygments_style = 'sphinx'
