from __future__ import annotations


class NegawattError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(NegawattError):
    exit_code = 2


class DataError(NegawattError, ValueError):
    exit_code = 3


class ConvergenceError(NegawattError):
    exit_code = 4
