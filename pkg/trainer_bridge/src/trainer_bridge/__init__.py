"""Reference consumer for conditioning-bundle directories.

Deliberately independent of the producing package: every format reader
here is written against the documented byte layouts, so agreement with
the producer is a real cross-implementation check.
"""

__version__ = "0.1.0"

from .bundle import BundleView, load_bundle  # noqa: F401
from .fusion import ZeroInitFusion, check_zero_init_fusion  # noqa: F401
from .verify import MismatchError, verify_stack  # noqa: F401
