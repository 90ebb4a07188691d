"""Exception hierarchy. Everything derives from ValueError so callers can catch broadly."""


class RebalanceError(ValueError):
    pass


class ConfigurationError(RebalanceError):
    pass


class InvalidActionError(RebalanceError):
    pass


class InvalidExperienceError(RebalanceError):
    pass


class TransferError(RebalanceError):
    pass


class DistillError(RebalanceError):
    pass


class NotReadyError(RebalanceError):
    pass


class KnowledgeFormatError(RebalanceError):
    """Malformed knowledge file. ``line`` is the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedRatioError(RebalanceError):
    pass


class UnfairComparisonError(RebalanceError):
    pass


class InsufficientEpisodesError(RebalanceError):
    pass


class EpisodeOverError(RebalanceError):
    pass
