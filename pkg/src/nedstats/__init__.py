"""Entity disambiguation, entity occurrence statistics and class-ratio estimation."""

__version__ = "0.1.0"
