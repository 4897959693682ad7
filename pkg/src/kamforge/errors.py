"""Exception types shared across the engine."""


class KamforgeError(Exception):
    pass


class CutoffOverflowError(KamforgeError):
    """A bracket or series would exceed the configured hard cutoffs."""


class ZeroDivisorError(KamforgeError):
    """A divisor classified as nonresonant fell below the zero guard."""


class DivisorTooSmallError(KamforgeError):
    """A homological divisor violates its Melnikov threshold.

    Carries enough context to cross-reference the failing Melnikov
    condition family.
    """

    def __init__(self, message, condition=None, indices=None, value=None,
                 threshold=None):
        super().__init__(message)
        self.condition = condition
        self.indices = indices
        self.value = value
        self.threshold = threshold


class StructureViolationError(KamforgeError):
    """An input field lacks a structural property a routine relies on."""


class MelnikovFailError(KamforgeError):
    """The nonresonance precheck failed at the current parameter point.

    Carries the failing report so callers can record which condition
    family broke and by how much.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CflViolationError(KamforgeError):
    """Requested time step exceeds the stability bound."""


class NanDetectedError(KamforgeError):
    """The integrator produced a non-finite state.

    Carries the last finite snapshot so blow-up probes can fit the tail.
    """

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class WindowTooShortError(KamforgeError):
    """The observation window cannot resolve the requested frequency."""


class DegenerateFitError(KamforgeError):
    """A least-squares fit has no usable data (zeros or single point)."""
