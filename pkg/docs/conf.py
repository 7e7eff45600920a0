import os
import re
import sys
from datetime import datetime

sys.path.append(os.path.abspath("../"))

needs_sphinx = "3.2"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.mathjax",
]

autoclass_content = "both"
autodoc_member_order = "bysource"
source_suffix = ".rst"
master_doc = "index"
project = "cerec"
author = "%d cerec developers" % datetime.now().year

output = os.popen("git describe --tags --abbrev=0").read().strip()  # nosec
release = re.sub("^v", "", output)
version = release

language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"
todo_include_todos = True

html_theme = "alabaster"
html_theme_options = {
    "description": "Collaborative embedding regression for video recommendation",
    "fixed_sidebar": True,
    "github_banner": False,
    "github_button": False,
}
html_static_path = ["_static"]
htmlhelp_basename = "cerecdoc"

suppress_warnings = ["image.nonlocal_uri"]
