"""Exception hierarchy shared by all modules."""


class PennationError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PennationError, ValueError):
    """An argument is out of its allowed range or has the wrong shape."""


class DegenerateInputError(PennationError, ValueError):
    """The input carries no usable structure (constant image, vertical point set, ...)."""


class SegmentationError(PennationError):
    """Aponeurosis segmentation did not yield two usable segments."""


class InsufficientDataError(PennationError, ValueError):
    """Too few samples for the requested statistic or fit."""


class FrameMismatchError(PennationError):
    """Estimate and annotation frame sets differ."""

    def __init__(self, missing_in_estimates, missing_in_annotations):
        self.missing_in_estimates = sorted(missing_in_estimates)
        self.missing_in_annotations = sorted(missing_in_annotations)
        super().__init__(
            "frame sets differ: "
            f"missing in estimates {self.missing_in_estimates}, "
            f"missing in annotations {self.missing_in_annotations}"
        )
