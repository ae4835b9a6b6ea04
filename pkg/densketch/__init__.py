"""densketch - uniform edge sampling over dynamic graph streams and sample-and-solve estimators."""

__version__ = "0.1.0"
