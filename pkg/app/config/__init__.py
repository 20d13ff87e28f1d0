"""Configuration imports"""

from .config import Config, DevelopmentConfig, ProductionConfig, TestingConfig, config, config_for

__all__ = ['Config', 'DevelopmentConfig', 'ProductionConfig', 'TestingConfig', 'config', 'config_for']
