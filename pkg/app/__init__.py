"""
Consistent-Point: semi-supervised point localization with a mean teacher
Application package: shared models, configuration, errors and the CLI
"""

__version__ = "1.0.0"
