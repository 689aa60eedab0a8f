"""linksyn: planar-linkage kinematics, datasets, and curve-conditioned
autoregressive diffusion synthesis."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
