from .errors import *
from .calculate import *
from .geometry import *
from .gaussian import *
from .bodymodel import *
from .association import *
from .trackers import *
from .evaluation import *
from .dataio import *
from .reconstruct import *

__version__ = '0.1.0'
