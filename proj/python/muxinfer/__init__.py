"""Runtime deep-model multiplexing: cost-aware routing across a jointly
trained model zoo, plus the deployment cost simulator."""

from ._native import *  # noqa: F401,F403
from ._native import __version__  # noqa: F401
