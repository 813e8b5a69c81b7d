"""Dynamic random graphs and Lambda-coalescents with momentum: exact
simulation of the block-size spectrum, its deterministic and stable
fluctuation limits, and the bubble sampling formula."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
