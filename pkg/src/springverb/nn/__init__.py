from .module import *  # noqa: F403
from .functional import *  # noqa: F403
from .layers import *  # noqa: F403
from .recurrent import *  # noqa: F403
