"""Real-time EEG attention monitoring: offline training pipeline plus a
streaming classification engine with alerting and session statistics."""

__version__ = "0.1.0"
