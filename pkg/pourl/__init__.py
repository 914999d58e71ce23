"""Pourl - proof-of-useful-work ledger where mining is one deep Q-learning step."""

__version__ = "0.1.0"
APP_TITLE = "Pourl Ledger Simulator"
