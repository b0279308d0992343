# mypy: disable-error-code="no-redef"
# seems like mypy doesn't respect __all__
from .exceptions import *  # noqa: F403
from .tensor import *  # noqa: F403
from .spectral import *  # noqa: F403
from .audio import *  # noqa: F403
from .dataset import *  # noqa: F403
from .nn import *  # noqa: F403
from .models import *  # noqa: F403
from .losses import *  # noqa: F403
from .metrics import *  # noqa: F403
from .checkpoint import *  # noqa: F403
from .training import *  # noqa: F403
from .features import *  # noqa: F403
from .config import *  # noqa: F403

__version__ = "0.1.0"
