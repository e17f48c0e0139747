class VpsError(Exception):
    """Base class for every error raised by the vpsnet library."""


class InvalidConfigError(VpsError):
    pass


class ShapeError(VpsError):
    pass


class MissingStageError(ShapeError):
    pass


class RoleLayoutError(VpsError):
    pass


class TimeOrderError(VpsError):
    """Token sets out of time order, or a DMR timestep that does not increase."""


class EmptyStreamError(VpsError):
    pass


class EmptyInputError(VpsError):
    pass


class InconsistentMaskError(VpsError):
    pass


class NonFiniteError(VpsError):
    pass


class CheckpointError(VpsError):
    pass


class StreamFormatError(VpsError):
    pass
