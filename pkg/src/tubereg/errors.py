"""Exception hierarchy shared by all tubereg modules."""


class TuberegError(Exception):
    """Base class for all errors raised by this package."""


# --- polytope engine ---

class DimensionMismatch(TuberegError):
    pass


class Unbounded(TuberegError):
    pass


class EmptyInput(TuberegError):
    pass


class NegativeScale(TuberegError):
    pass


class ProjectionBlowup(TuberegError):
    """Fourier-Motzkin elimination exceeded the row cap."""


# --- signal generator filters ---

class BadLeadingCoefficient(TuberegError):
    pass


class UnstableGenerator(TuberegError):
    pass


class WrongHistoryLength(TuberegError):
    pass


class ConstructionFailed(TuberegError):
    """Invariant-set iteration hit its cap without certifying invariance."""


# --- lifted model ---

class RankDeficient(TuberegError):
    """Controllability or observability test failed."""


class IllPosed(TuberegError):
    """The unconstrained regulation problem has no unique solution."""


# --- gain synthesis ---

class RiccatiDivergence(TuberegError):
    pass


class NotStabilizable(TuberegError):
    pass


class LyapunovFailure(TuberegError):
    pass


# --- tube construction ---

class NotSchur(TuberegError):
    pass


class NoConvergence(TuberegError):
    pass


class TighteningInfeasible(TuberegError):
    pass


class CertificationFailed(TuberegError):
    pass


# --- QP / MPC ---

class SolverFailure(TuberegError):
    """QP solver hit its iteration cap without meeting tolerances."""


class InfeasibleProblem(TuberegError):
    pass


class ConfigViolation(TuberegError):
    pass


class ScenarioInvalid(TuberegError):
    pass
