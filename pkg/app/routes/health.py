"""Health check and status endpoints"""

from flask import Blueprint, jsonify
import time
import sys
import os
import numpy
import scipy
from ..config.config import Config
from ..models import HealthStatus
from ..services.simulation_service import canonical_summary

health_bp = Blueprint('health', __name__)

@health_bp.route('/health', methods=['GET'])
def health_check():
    """Basic health check endpoint with Pydantic model"""

    health_data = HealthStatus(
        status='healthy',
        service=Config.APP_NAME,
        version=Config.VERSION,
        features={
            'simulate': True,
            'rank': True,
            'fit': True,
        }
    )

    return jsonify(health_data.model_dump(mode='json')), 200

@health_bp.route('/api/status', methods=['GET'])
def status_check():
    """Configuration defaults, library versions and the canonical simulation models"""

    return jsonify({
        'application': {
            'name': Config.APP_NAME,
            'version': Config.VERSION,
            'debug': Config.DEBUG,
            'threads': Config.THREADS
        },
        'defaults': {
            'n': Config.N,
            'L': Config.L,
            'l_star': Config.L_STAR,
            'B': Config.B,
            'M': Config.M,
            'c1': Config.c1_for(Config.L_STAR),
            'c2': Config.C2,
            'delta_star': Config.DELTA_STAR,
            'analyze_delta_star': Config.ANALYZE_DELTA_STAR,
            'cv_reps': Config.CV_REPS,
            'k_max': Config.K_MAX
        },
        'system': {
            'python_version': sys.version,
            'numpy': numpy.__version__,
            'scipy': scipy.__version__,
            'cwd': os.getcwd()
        },
        'models': canonical_summary(),
        'endpoints': [
            '/health',
            '/api/status',
            '/api/ping',
            '/api/simulate',
            '/api/rank',
            '/api/fit'
        ],
        'timestamp': time.time()
    }), 200

@health_bp.route('/api/ping', methods=['GET'])
def ping():
    """Simple ping endpoint"""
    return jsonify({'message': 'pong', 'timestamp': time.time()}), 200
