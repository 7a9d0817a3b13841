"""Top-m selection by sequential simulation budget allocation."""
__version__ = "0.1.0"
