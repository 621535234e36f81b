class CausalVarError(Exception):
    """
    Base class of every error raised by the estimation pipeline.

    Attributes
    ----------
    exit_code : int
        Process exit code used by the command line front door.
    """

    exit_code = 1


class ConfigError(CausalVarError):
    exit_code = 2


class DataError(CausalVarError, ValueError):
    exit_code = 3


class NumericalError(CausalVarError, ValueError):
    exit_code = 4


##### Configuration #####
class InvalidConfig(ConfigError):
    pass


class MissingArtifact(ConfigError):
    pass


##### Data #####
class MissingCell(DataError):
    pass


class UnknownUnit(DataError):
    pass


class BadAdoptTime(DataError):
    pass


class BadTimeIndex(DataError):
    pass


class SelfLoop(DataError):
    pass


class ConstantColumn(DataError):
    pass


class MissingValue(DataError):
    pass


class InsufficientPreperiod(DataError):
    pass


class NoUnitsAtLag(DataError):
    pass


##### Numerical #####
class RankDeficient(NumericalError):
    pass


class SingularGram(NumericalError):
    def __init__(self, block, condition):
        self.block = block
        self.condition = condition
        super().__init__(f"Gram matrix of {block} is singular (condition number {condition:.3g})")


class NotPD(NumericalError):
    pass


class NoConverge(NumericalError):
    pass


class SingularConditional(NumericalError):
    pass


class SingularSigma22(NumericalError):
    pass


class RankDeficientDesign(NumericalError):
    pass


class EmptyCluster(NumericalError):
    pass
