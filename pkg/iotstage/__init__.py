"""
iotstage: staging environments for IoT applications
"""

__version__ = "1.0.0"
