"""Exception hierarchy.

The CLI maps ``DataError`` to exit code 2 and ``NumericalError`` to exit
code 3, so every failure raised by the library derives from one of the two.
"""


class OrthofuseError(Exception):
    pass


class DataError(OrthofuseError):
    """Bad or insufficient input data."""


class NumericalError(OrthofuseError):
    """A computation could not be carried out to the required accuracy."""


class TooFewObservations(DataError):
    pass


class EmptyData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NoControlRows(DataError):
    pass


class NoTreatedRows(DataError):
    pass


class NoTreatedInWeightFold(DataError):
    pass


class ZeroControlMass(DataError):
    pass


class UnclippedPropensity(DataError):
    pass


class RequiresTruth(DataError):
    pass


class EmptyCluster(DataError):
    pass


class ZeroSE(DataError):
    pass


class SingleElement(DataError):
    pass


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, column, value):
        super().__init__(f"non-numeric cell {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class TooSmallTask(DataError):
    pass


class TooFewPoints(DataError):
    pass


class EmptyClusterRetry(DataError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class DegenerateDesign(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class ConvergenceWarning(UserWarning):
    pass
