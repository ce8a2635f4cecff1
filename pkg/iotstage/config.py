"""
Configuration settings for the staging framework
"""

import os

_LOG_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}


def log_level_from_env(default: str = "info") -> str:
    """Map IOTSTAGE_LOG (error|info|debug) onto a logging level name."""
    return _LOG_LEVELS.get(os.getenv("IOTSTAGE_LOG", default).lower(), "INFO")


class Config:
    """Base configuration class"""

    # Logging
    LOG_LEVEL = log_level_from_env()
    LOG_FORMAT = os.getenv("IOTSTAGE_LOG_FORMAT", "json").lower()

    # Scenario defaults
    DEFAULT_STEP_MS = int(os.getenv("IOTSTAGE_DEFAULT_STEP_MS", "100"))

    # Hardware-in-the-loop gateway
    GATEWAY_HOST = os.getenv("IOTSTAGE_GATEWAY_HOST", "127.0.0.1")
    GATEWAY_POLL_MS = int(os.getenv("IOTSTAGE_GATEWAY_POLL_MS", "20"))

    # Calibration probing
    CALIBRATION_SPACING_MS = int(os.getenv("IOTSTAGE_CALIBRATION_SPACING_MS", "20"))
    CALIBRATION_TIMEOUT_MS = int(os.getenv("IOTSTAGE_CALIBRATION_TIMEOUT_MS", "1000"))

    # Reporting
    REPORT_SCHEMA_VERSION = 1
    METRICS_PATH = os.getenv("IOTSTAGE_METRICS_PATH")


class DevelopmentConfig(Config):
    """Development configuration"""

    LOG_LEVEL = "DEBUG"
    LOG_FORMAT = "text"


class TestConfig(Config):
    """Testing configuration"""

    LOG_LEVEL = "DEBUG"
    GATEWAY_POLL_MS = 5
    CALIBRATION_SPACING_MS = 5
    CALIBRATION_TIMEOUT_MS = 300


config = {
    "development": DevelopmentConfig,
    "testing": TestConfig,
    "default": Config,
}


def get_config(name=None):
    """Configuration class for IOTSTAGE_ENV (development|testing), else the default."""
    name = (name or os.getenv("IOTSTAGE_ENV", "default")).lower()
    return config.get(name, Config)
