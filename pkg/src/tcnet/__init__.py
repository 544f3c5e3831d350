"""Transcoder placement optimisation and flow-assisted live transcoder migration."""

__version__ = "0.1.0"
