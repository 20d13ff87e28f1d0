# Configuration management for the calibration toolkit
import os
import logging

class Config:
    """Base configuration"""

    # Flask settings
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-funcrc')
    DEBUG = os.getenv('FLASK_DEBUG', 'False').lower() == 'true'

    # Application settings
    APP_NAME = "FuncRC"
    VERSION = "1.0.0"

    # Worker pool for rank votes, CV repetitions and study replicates
    THREADS = int(os.getenv('FUNCRC_THREADS', '1'))

    # Base seed used when a command is given no --seed
    SEED = int(os.getenv('FUNCRC_SEED', '2024'))

    # Simulation defaults (n curves on an L-point adequate grid)
    N = int(os.getenv('FUNCRC_N', '100'))
    L = int(os.getenv('FUNCRC_L', '100'))

    # Rank selection: subgrid size, votes, max rank, scree cutoff c1 = C1_MULTIPLIER * L*^2
    L_STAR = int(os.getenv('FUNCRC_L_STAR', '25'))
    B = int(os.getenv('FUNCRC_B', '100'))
    M = int(os.getenv('FUNCRC_M', '10'))
    C1_MULTIPLIER = float(os.getenv('FUNCRC_C1_MULTIPLIER', '0.01'))
    C2 = float(os.getenv('FUNCRC_C2', '50'))
    DELTA_STAR = float(os.getenv('FUNCRC_DELTA_STAR', '0.15'))

    # Near-white-noise errors (real data analysis)
    ANALYZE_DELTA_STAR = float(os.getenv('FUNCRC_ANALYZE_DELTA_STAR', '0.05'))

    # Spectral truncation cross-validation
    CV_REPS = int(os.getenv('FUNCRC_CV_REPS', '500'))
    CV_FOLDS = 2
    K_MAX = int(os.getenv('FUNCRC_K_MAX', '10'))

    # Masked completion optimizer
    OPT_TOL = float(os.getenv('FUNCRC_OPT_TOL', '1e-8'))
    OPT_MAX_ITER = int(os.getenv('FUNCRC_OPT_MAX_ITER', '2000'))
    OPT_RESTARTS = int(os.getenv('FUNCRC_OPT_RESTARTS', '3'))

    # Logging configuration
    LOG_LEVEL = os.getenv('FUNCRC_LOG_LEVEL', 'INFO')

    @classmethod
    def c1_for(cls, l_star: int, multiplier: float = None) -> float:
        """Scree cutoff tracking the subgrid size: multiplier * L*^2"""
        if multiplier is None:
            multiplier = cls.C1_MULTIPLIER
        return multiplier * l_star ** 2

    @staticmethod
    def init_logging(level: str = None):
        """Configure root logging once for CLI and server processes"""
        log_level = getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO)
        logging.basicConfig(
            level=log_level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

    @staticmethod
    def init_app(app):
        """Initialize app with configuration"""

        Config.init_logging()

        app.logger.info(f"🔧 {Config.APP_NAME} v{Config.VERSION} configured")
        app.logger.info(f"🧵 Worker threads: {Config.THREADS}")

class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True

class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False

class TestingConfig(Config):
    """Test-client configuration"""
    TESTING = True
    DEBUG = False

config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}

def config_for(name: str = None):
    """Config class for a name, FLASK_ENV when absent; unknown names fall back to the default"""
    name = name or os.getenv('FLASK_ENV', 'default')
    return config.get(name, config['default'])
