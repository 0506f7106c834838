"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for invalid input, 3 for a numerical procedure that failed to converge.
"""


class DirLapError(Exception):
    exit_code = 2

    def __init__(self, message="", report=None):
        super().__init__(message)
        self.report = report


class ValidationError(DirLapError):
    exit_code = 2


class ConvergenceError(DirLapError):
    exit_code = 3


class InvalidWeight(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class VertexIndexError(ValidationError, IndexError):
    pass


class ParseError(ValidationError):
    pass


class NotLaplacian(ValidationError):
    pass


class IsolatedVertex(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class NotSDD(ValidationError):
    pass


class NotEulerian(ValidationError):
    pass


class NotConnected(ValidationError):
    pass


class BadParameter(ValidationError):
    pass


class DimError(ValidationError):
    pass


class NotStrictlyRCDD(ValidationError):
    pass


class BadCertificate(ValidationError):
    pass


class BadScaling(ValidationError):
    pass


class BadQuery(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class Singular(ConvergenceError):
    pass


class NoConvergence(ConvergenceError):
    pass


class CertificateFailed(ConvergenceError):
    pass


class NoMixing(ConvergenceError):
    pass


class Nonterminating(ConvergenceError):
    pass
