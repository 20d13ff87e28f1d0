"""Service imports and initialization"""

from ..config.config import Config

from .service_factory import ServiceFactory

# Shared services for the CLI and the routes
services = ServiceFactory(Config)

__all__ = [
    'ServiceFactory',
    'services',
]
