"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
process status without a lookup table: 2 for configuration problems, 3 for
missing artifacts, 4 for anything wrong with the data itself.
"""


class CMLRecError(Exception):
    exit_code = 4

    @property
    def reason(self):
        return type(self).__name__


class DataError(CMLRecError):
    exit_code = 4


class ConfigError(CMLRecError):
    exit_code = 2


class InvalidConfig(ConfigError):
    pass


class MissingArtifact(CMLRecError):
    exit_code = 3


class ArtifactDrift(DataError):
    """An upstream artifact changed on disk after its dependents were built."""


class EmptyCorpus(DataError):
    pass


class NoKnownTokens(DataError):
    pass


class UnknownMovie(DataError):
    pass


class NoPositives(DataError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class MissingEmbedding(DataError):
    pass


class DegenerateDataset(DataError):
    pass


class EmptyEligibleHistory(DataError):
    pass


class SingleClass(DataError, ValueError):
    pass


class EmptySegment(DataError):
    pass
