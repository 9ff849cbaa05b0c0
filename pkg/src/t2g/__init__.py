"""Time-to-green prediction for fully-actuated traffic signals from telegram logs."""

__version__ = "0.1.0"
