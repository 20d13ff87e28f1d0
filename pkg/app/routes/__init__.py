"""Basic route blueprints"""

from .health import health_bp
from .calibration import calibration_bp

__all__ = ['health_bp', 'calibration_bp']
