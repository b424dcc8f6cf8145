"""Exception types shared across the package."""


class AnycastLBError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(AnycastLBError):
    pass


class NonSquareMatrix(AnycastLBError):
    pass


class RowSumViolation(AnycastLBError):
    """A correlation-matrix row does not sum to one within tolerance."""

    def __init__(self, row: int, total: float):
        self.row = row
        self.total = total
        super().__init__(f"row {row} sums to {total!r}, expected 1")


class NegativeEntry(AnycastLBError):
    def __init__(self, i: int, j: int, value: float):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"entry ({i},{j}) = {value!r} is negative")


class BadPartition(AnycastLBError):
    pass


class InvalidInstance(AnycastLBError):
    pass


class NegativeLoad(AnycastLBError):
    pass


class OutOfRangeControl(AnycastLBError):
    pass


class BadInterval(AnycastLBError):
    pass


class NonPositiveInput(AnycastLBError):
    pass


class InfeasibleEverywhere(AnycastLBError):
    pass


class UnreachableCategory(AnycastLBError):
    """A node cannot signal a peer because the forward correlation entry is zero."""

    def __init__(self, i: int, j: int):
        self.i, self.j = i, j
        super().__init__(
            f"node {i} cannot generate category-{j} control traffic: "
            f"C[{i}][{j}] = 0 while C[{j}][{i}] > 0"
        )


class BadInitialPoint(AnycastLBError):
    pass


class NotAFixedPoint(AnycastLBError):
    pass


class NotConverged(AnycastLBError):
    pass


class BoundaryTouched(AnycastLBError):
    pass


class GeneratorFailure(AnycastLBError):
    pass


class EmptyInput(AnycastLBError):
    pass
