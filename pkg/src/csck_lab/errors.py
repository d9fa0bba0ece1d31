"""Exception hierarchy.

Every error carries a ``kind`` used by the CLI to pick an exit status:
``"validation"`` for malformed or inadmissible input, ``"numerical"`` for
solver failures.
"""

from __future__ import annotations


class CsckLabError(Exception):
    kind = "validation"
    module = "csck_lab"


# polytope -----------------------------------------------------------------

class PolytopeError(CsckLabError, ValueError):
    module = "polytope"


class NotDelzant(PolytopeError):
    pass


class Unbounded(PolytopeError):
    pass


class EmptyInterior(PolytopeError):
    pass


class NonPrimitiveNormal(PolytopeError):
    pass


class RedundantFacet(PolytopeError):
    pass


class SchemaError(PolytopeError):
    pass


class SubdivisionGap(PolytopeError):
    pass


# stability ----------------------------------------------------------------

class StabilityError(CsckLabError, ValueError):
    module = "stability"


class EmptyFamily(StabilityError):
    pass


class DegenerateGram(StabilityError):
    pass


# toric energy / geodesics -------------------------------------------------

class HessianDegenerate(CsckLabError, ValueError):
    module = "toric_energy"

    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class LegendreFailure(CsckLabError, ValueError):
    module = "toric_energy"


class GridMismatch(CsckLabError, ValueError):
    module = "geodesic_space"


class NoConvergence(CsckLabError, RuntimeError):
    kind = "numerical"
    module = "geodesic_space"

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


# continuity path / appendix -----------------------------------------------

class NewtonDiverged(CsckLabError, RuntimeError):
    kind = "numerical"
    module = "continuity_path"

    def __init__(self, message: str, t=None, last_iterate=None, history=()):
        super().__init__(message)
        self.t = t
        self.last_iterate = last_iterate
        self.history = list(history)


class OutOfDomain(CsckLabError, ValueError):
    module = "continuity_path"


class InadmissibleEndpoint(CsckLabError, ValueError):
    module = "mabuchi_appendix"
