"""Exception types shared across the package.

Errors are grouped by the subsystem that raises them.  Recoverable
conditions (non-converged solvers, degenerate scorer inputs inside the
benchmark loop) are reported through ``flags`` attributes on result
objects instead of exceptions; everything here is a hard failure.
"""


class DABenchError(Exception):
    """Base class for all package errors."""


# --- data model -------------------------------------------------------------

class InvalidSpec(DABenchError):
    pass


class SchemaMismatch(DABenchError):
    pass


class NonNumericFeature(DABenchError):
    pass


class EmptyDomain(DABenchError):
    pass


class LengthMismatch(DABenchError):
    pass


class MaskedLabels(DABenchError):
    pass


class InvalidRatio(DABenchError):
    pass


class ClassTooSmall(DABenchError):
    pass


# --- estimators -------------------------------------------------------------

class SingleClass(DABenchError):
    pass


class NonFiniteInput(DABenchError):
    pass


class DegenerateWeights(NonFiniteInput):
    """All-zero (or otherwise unusable) sample weights."""


class Diverged(DABenchError):
    pass


class GramNotFinite(DABenchError):
    pass


class EmptyGrid(DABenchError):
    pass


# --- reweighting ------------------------------------------------------------

class SingularCovariance(DABenchError):
    pass


class DomainClassifierFailed(DABenchError):
    pass


class DegenerateKernel(DABenchError):
    pass


class NonPSDKernel(DABenchError):
    pass


class EmptyClass(DABenchError):
    pass


# --- mapping ----------------------------------------------------------------

class NonPSD(DABenchError):
    pass


class TooLarge(DABenchError):
    pass


class Unbalanced(DABenchError):
    pass


class ZeroRowMass(DABenchError):
    pass


# --- subspace ---------------------------------------------------------------

class RankDeficient(DABenchError):
    pass


class EigSolverFailed(DABenchError):
    pass


class IllConditioned(DABenchError):
    pass


# --- other DA ---------------------------------------------------------------

class NotBinary(DABenchError):
    pass


class EmptyPool(DABenchError):
    pass


# --- scorers ----------------------------------------------------------------

class DegenerateRows(DABenchError):
    pass


class TooFewSamples(DABenchError):
    pass


class BackwardFitFailed(DABenchError):
    pass


# --- statistics -------------------------------------------------------------

class ZeroVariance(DABenchError):
    pass


class EmptyTable(DABenchError):
    pass


# --- benchmark --------------------------------------------------------------

class ConfigError(DABenchError):
    pass


class NoRecords(DABenchError):
    pass


class MissingBaseline(DABenchError):
    pass
