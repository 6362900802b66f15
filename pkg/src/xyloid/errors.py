"""Exception types shared across the toolkit."""


class XyloidError(Exception):
    """Base class for all toolkit errors."""


# --- registry / splits ---

class UnknownSpecies(XyloidError):
    pass


class DuplicateId(XyloidError):
    pass


class UnreadableImage(XyloidError):
    pass


class UnknownSpecimen(XyloidError):
    pass


class InsufficientSpecimens(XyloidError):
    pass


class BadRatios(XyloidError):
    pass


# --- patches ---

class ImageTooSmall(XyloidError):
    pass


class BadDims(XyloidError):
    pass


# --- model / training ---

class MissingWeights(XyloidError):
    pass


class ShapeMismatch(XyloidError):
    pass


class BadStep(XyloidError):
    pass


class DivergedLoss(XyloidError):
    """Training hit a non-finite loss. Carries the last good checkpoint, if any."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class NoCheckpoints(XyloidError):
    pass


# --- bundle ---

class VersionMismatch(XyloidError):
    pass


class CorruptBundle(XyloidError):
    pass


# --- evaluation ---

class EmptyInput(XyloidError):
    pass


class InvalidRecord(XyloidError):
    pass


class ClassListMismatch(XyloidError):
    pass


# --- service ---

class UndecodableImage(XyloidError):
    pass


class UnknownSession(XyloidError):
    pass


class UnknownPrediction(XyloidError):
    pass


class MissingActualClass(XyloidError):
    pass


class StorageUnavailable(XyloidError):
    pass
