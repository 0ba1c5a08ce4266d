"""Name, version and description read from this member's pyproject.toml."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any

PYPROJECT = Path(__file__).parent / "pyproject.toml"


@lru_cache(maxsize=1)
def project_metadata() -> dict[str, Any]:
    if not PYPROJECT.exists():
        raise FileNotFoundError(f"pyproject.toml not found at {PYPROJECT}")
    with PYPROJECT.open("rb") as f:
        return tomllib.load(f)["project"]


__api_name__: str = project_metadata()["name"]
__version__: str = project_metadata()["version"]
__description__: str = project_metadata()["description"]
