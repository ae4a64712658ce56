"""Trust prediction for Social-IoT via Hellinger friend graphs and blended matrix factorisation."""

__version__ = "0.1.0"
