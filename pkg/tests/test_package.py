import re
from pathlib import Path

import mapfuse

PYPROJECT = Path(__file__).resolve().parents[1] / "pyproject.toml"


def project_field(name):
    match = re.search(rf"^{name} = (.+)$", PYPROJECT.read_text(encoding="utf-8"), re.MULTILINE)
    assert match, name
    return match.group(1)


def test_version_matches_package():
    assert project_field("version") == f'"{mapfuse.__version__}"'


def test_authors_name_the_project_maintainers():
    authors = project_field("authors")
    assert authors == '[{ name = "mapfuse maintainers" }]'
    assert "email" not in authors
