"""Energy-aware sleep-mode control for mmWave base stations."""

__version__ = "0.1.0"
