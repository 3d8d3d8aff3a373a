"""Grid-of-Beams beam management simulator with REM-driven policy training."""

__version__ = "0.1.0"
