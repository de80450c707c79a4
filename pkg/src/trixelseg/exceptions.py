"""Error types raised across the package.

Every error derives from :class:`TrixelsegError` (itself a ``ValueError``) so
callers can catch the whole family with one clause.
"""


class TrixelsegError(ValueError):
    pass


class ImageTooSmall(TrixelsegError):
    pass


class InvalidMask(TrixelsegError):
    pass


class DegenerateEyes(TrixelsegError):
    pass


class EmptyForeground(TrixelsegError):
    pass


class EmptyBackground(EmptyForeground):
    """No background seeds.

    Subclasses :class:`EmptyForeground` so that code catching the latter
    handles any trimap without both seed sets.
    """


class TooFewVertices(TrixelsegError):
    pass


class MeshMismatch(TrixelsegError):
    pass


class NoEdges(TrixelsegError):
    pass


class EmptyClass(TrixelsegError):
    pass


class NoMasks(TrixelsegError):
    pass


class EmptyMask(TrixelsegError):
    pass


class BboxOutOfRange(TrixelsegError):
    pass


class SingleClass(TrixelsegError):
    pass


class LayoutMismatch(TrixelsegError):
    pass


class LengthMismatch(TrixelsegError):
    pass


class TooFewSamples(TrixelsegError):
    pass


class DimMismatch(TrixelsegError):
    pass


class NoRecords(TrixelsegError):
    pass
