"""
Built-in behaviors; importing this package registers them.
"""

from iotstage.behaviors import basic, levelcrossing  # noqa: F401
