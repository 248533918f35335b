"""Property-based verification of robot tabletop-manipulation actions.

The package generates randomized simulated scenarios, executes parameterized
action models against a deterministic fault-injecting world, evaluates
ontology-declared success properties, and scores and reports the results.
"""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def default_ontology_path() -> Path:
    """Path of the packaged default action ontology."""
    return Path(resources.files(__name__) / "data" / "ontology.toml")


def demo_dir() -> Path:
    """Directory holding the packaged demo world, models and config."""
    return Path(resources.files(__name__) / "data" / "demo")
