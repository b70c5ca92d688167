"""Circuit and pattern-multiplication model of a series-fed microstrip patch array."""

from importlib import resources

__version__ = "0.1.0"


def paper_geometry_path():
    """Path of the bundled 1x6, 28 GHz reference geometry."""
    return resources.files(__package__) / "data" / "paper.geom"
