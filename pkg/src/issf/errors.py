"""Exception hierarchy shared by every layer of the simulator."""


class IssfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(IssfError):
    """A scenario, plan or blob document is malformed."""


class ValidationError(IssfError):
    """A document parsed cleanly but violates a semantic constraint."""


class UnknownId(IssfError):
    """An action names a node, vulnerability or credential outside the graph."""


class EmptyMask(IssfError):
    """No valid action is available for selection."""


class ShapeMismatch(IssfError):
    """A policy was built for a graph with a different action/observation shape."""


class RoleMismatch(IssfError):
    """An attacker policy was used where a defender was expected, or vice versa."""


class AdversaryRequired(IssfError):
    """Defender training requires a real attacker adversary."""


class CyclicPlan(IssfError):
    """A training plan's dependencies cannot be ordered."""


class UnknownService(IssfError):
    """A service id is not present in the pool or plan."""


class DuplicateId(IssfError):
    pass


class LineageError(IssfError):
    """A service's adversary/pretrain references are inconsistent."""


class HashMismatch(IssfError):
    """Stored fingerprints disagree with the manifest or the environment."""


class NotFound(IssfError):
    pass


class CorruptBlob(IssfError):
    pass


class InsufficientServices(IssfError):
    """A tournament needs a same-role pair and at least one adversary."""
