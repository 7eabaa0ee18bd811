"""Set-based attractivity certificates for discrete-time switched systems."""
from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def scenario_path(name: str) -> Path:
    """Path of a shipped scenario file, e.g. ``scenario_path("example1")``."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files(__name__) / "scenarios" / name))
