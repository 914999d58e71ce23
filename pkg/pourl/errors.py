"""Exception hierarchy shared by every pourl module."""


class PourlError(Exception):
    """Root of every error raised on purpose by pourl."""


class ConfigError(PourlError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class DumpFormatError(PourlError):
    """A .chain or .qnet file is truncated, has a bad magic or trailing bytes."""


# -- hashchain -----------------------------------------------------------------

class ChainError(PourlError):
    pass


class HeightMismatch(ChainError):
    pass


class HashMismatch(ChainError):
    pass


class TransitionInvalid(ChainError):
    pass


class GenesisInvalid(ChainError):
    pass


class InvalidChain(ChainError):
    pass


# -- mlp -------------------------------------------------------------------

class NetworkError(PourlError):
    pass


class DimensionMismatch(NetworkError):
    pass


class ShapeMismatch(NetworkError):
    pass


class EmptyBatch(NetworkError):
    pass


# -- environment -------------------------------------------------------------

class OracleError(PourlError):
    pass


class InvalidAction(OracleError):
    pass


class InvalidState(OracleError):
    pass


class NonConvergence(OracleError):
    pass


# -- dqn / consensus ---------------------------------------------------------------

class UnknownState(PourlError):
    pass


class InvalidCandidate(PourlError):
    def __init__(self, height: int, cause: ChainError) -> None:
        super().__init__(f"candidate chain invalid at height {height}: {cause}")
        self.height = height
        self.cause = cause
