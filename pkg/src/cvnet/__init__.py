"""cvnet: complex-valued neural networks on a hand-rolled Wirtinger tape,
plus simulation and training harnesses for three wireless tasks
(OFDM channel estimation, grant-free activity detection, pilot/feedback/
precoder design)."""

from .config import ConfigError
from .ctensor import (CTensor, astensor, no_grad, backward,
                      ShapeError, DomainError, GraphError)
from .optim import SGD, Adam
from .gradcheck import finite_diff_grad, check_gradients, GradcheckFailure

__version__ = "0.1.0"
