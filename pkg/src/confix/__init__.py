"""confix: confidence-gated repair of 3D Gaussian scenes."""

from . import parallel  # noqa: F401  (pins the kernel thread cap first)

__version__ = "0.1.0"
