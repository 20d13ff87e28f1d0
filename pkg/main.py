"""
FuncRC - Main Flask Application
JSON surface over the regression calibration toolkit; the batch front end is app/cli.py
"""

from flask import Flask, jsonify
from flask_cors import CORS
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from app.config.config import config_for
from app.routes.health import health_bp
from app.routes.calibration import calibration_bp

def create_app(config_name: str = None):
    """Create and configure Flask application; config_name picks development, production or testing"""
    app = Flask(__name__)

    # Load configuration
    config = config_for(config_name)()
    app.config.from_object(config)
    config.init_app(app)

    # Enable CORS
    CORS(app)

    # Register blueprints
    app.register_blueprint(health_bp)
    app.register_blueprint(calibration_bp)

    @app.route('/', methods=['GET'])
    def root():
        return jsonify({
            "message": "FuncRC regression calibration API",
            "version": config.VERSION,
            "endpoints": [
                "/health",
                "/api/status",
                "/api/ping",
                "/api/simulate",
                "/api/rank",
                "/api/fit"
            ]
        })

    return app

if __name__ == '__main__':
    app = create_app()

    # Print startup information
    config = config_for()()
    print("🚀 Starting FuncRC Flask API...")
    print(f"🧵 Worker threads: {config.THREADS}")
    print(f"🎯 Rank defaults: L*={config.L_STAR}, B={config.B}, M={config.M}, delta*={config.DELTA_STAR}")

    # Use PORT from environment (for Render/Railway) or default to 5000
    port = int(os.environ.get('PORT', 5000))
    print(f"🌐 Running on port: {port}")

    app.run(
        host='0.0.0.0',
        port=port,
        debug=config.DEBUG
    )
