"""Edge-type usefulness learning and community evaluation for heterogeneous music networks."""

__version__ = "0.1.0"
