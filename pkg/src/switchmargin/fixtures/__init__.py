"""Bundled problem files for the worked examples."""

from importlib import resources

NAMES = ("example1", "example2", "example3", "trivial", "nonhurwitz")


def path(name):
    """Filesystem path of the bundled problem file `name` (without ``.toml``)."""
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {NAMES}")
    return resources.files(__name__) / f"{name}.toml"
