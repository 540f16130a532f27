"""Flow-graph attack detection and controller-side mitigation for SDN packet-injection attacks."""
from .flowkit import FEATURES, Label

__version__ = "0.1.0"
__all__ = ["FEATURES", "Label", "__version__"]
