from ._safa import *  # noqa: F401,F403
from ._safa import Error, ConfigError, DimensionError, DegenerateError

__version__ = "0.1.0"
