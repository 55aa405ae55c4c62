"""Exception hierarchy shared across the toolkit."""


class FlipError(Exception):
    """Base class for all toolkit errors."""


class RegionTooSmallError(FlipError):
    """Requested particle count does not fit on a jittered grid in the region."""


class NumericalBlowupError(FlipError):
    """A particle coordinate left the world bounds or became non-finite."""


class ColliderShapeError(FlipError):
    """Operation applied to a collider of the wrong shape."""


class JamError(FlipError):
    """Less than the required fraction of particles exited the funnel in time."""


class UnknownMaterialError(FlipError):
    """Material name not present in the targets file."""


class DegenerateBoundsError(FlipError):
    """Search bounds have collapsed and the initial design is exhausted."""


class InsufficientHistoryError(FlipError):
    """Not enough evaluation records to refine bounds."""


class EpisodeFinishedError(FlipError):
    """apply_action called on a finished episode."""


class EpisodeActiveError(FlipError):
    """episode_error requested before the episode terminated."""


class InfeasibleLoadError(FlipError):
    """Spoon tray cannot hold the requested particle count."""


class BufferUnderfilledError(FlipError):
    """Replay buffer holds fewer transitions than the batch size."""


class CheckpointError(FlipError):
    """Base class for checkpoint load failures."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated or has bad magic bytes."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint schema version or network shapes do not match."""


class ConfigError(FlipError):
    """Run configuration failed validation."""
