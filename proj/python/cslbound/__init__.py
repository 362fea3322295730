"""CSL force-noise bounds from cantilever spectra."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
