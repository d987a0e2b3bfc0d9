"""Exception hierarchy shared by all stokeslab modules."""


class StokesLabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(StokesLabError):
    """Malformed input (bad shapes, bad config, bad braid word)."""


class NonConvergence(StokesLabError):
    """An iterative numerical routine failed to converge."""


class IllConditioned(StokesLabError):
    """Eigenvector matrix conditioning exceeds the configured bound."""


class DomainError(StokesLabError):
    """A scalar function is undefined at an eigenvalue of its argument."""


class ArgumentMismatch(StokesLabError):
    """The supplied angle is not an argument of the given complex number."""


class Resonant(StokesLabError):
    """Eigenvalue differences hit a nonzero integer (or a shifted solve is singular)."""


class DegenerateU(StokesLabError):
    """Two of the u-values coincide."""


class RankMismatch(StokesLabError):
    """Tensor factors built over different gl ranks."""


class SingularShift(StokesLabError):
    """zI + A_kk is singular at the requested z."""


class SingularProduct(StokesLabError):
    """A factor of an ordered product is not invertible."""


class ZeroLambda(StokesLabError):
    """Spectral parameter lambda = 0 where a 1/lambda term is present."""


class EqualLambdas(StokesLabError):
    """The two spectral parameters of an RTT check coincide."""


class ZeroHbar(StokesLabError):
    """hbar = 0 where a 1/hbar normalization is required."""


class SegmentBlocked(StokesLabError):
    """Some u_i lies on the open segment (u_s, u_t)."""


class LineBlocked(StokesLabError):
    """Some u_i lies on the full line through u_s and u_t."""


class NotConverged(NonConvergence):
    """A product trace did not reach the requested tolerance by pmax."""


class PoleHit(StokesLabError):
    """Evaluation point of a difference solution sits on its singular set."""


class NotAccurate(NonConvergence):
    """ODE step control could not meet the requested tolerance."""


class OrderingFailure(StokesLabError):
    """No index permutation makes Im(u_k e^{id}) strictly decreasing."""


class ArgumentWindowViolation(StokesLabError):
    """Pairwise argument differences leave the allowed window."""


class GeometryAmbiguous(StokesLabError):
    """A configuration sits within tolerance of a case boundary."""


class InvariantViolation(StokesLabError):
    """A structural invariant (e.g. unipotent diagonal) was violated."""


class TailTooLarge(StokesLabError):
    """Series truncation error estimate exceeds the requested tolerance."""
