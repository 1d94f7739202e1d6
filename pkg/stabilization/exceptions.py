class StabilizationError(Exception):
    """Base class for every failure raised by the stabilization app"""
    pass


class DimensionError(StabilizationError, ValueError):
    """Matrix or signal dimensions do not agree"""
    pass


class FilterDesignError(StabilizationError):
    """(Lambda, Gamma, Delta) violate the filter tuning rules"""
    pass


class RealizationError(StabilizationError):
    """The non-minimal realization could not be built to tolerance"""
    pass


class SimulationError(StabilizationError):
    """Integration produced non-finite values or a malformed grid"""
    pass


class ExcitationError(StabilizationError):
    """The filtered data are not interval exciting (Z is singular)"""
    pass


class NoiseBoundError(StabilizationError):
    """No certified noise energy bound can be produced"""
    pass


class SynthesisError(StabilizationError):
    """The LMI could not be assembled or its solution is unusable"""
    pass


class PipelineError(StabilizationError):
    """
    Failure of one stage of the stabilization pipeline.

    The stage label is one of: initialization, filtering,
    gain_computation, deployment.
    """

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class PoleError(StabilizationError):
    """A transfer function was evaluated at one of its poles"""
    pass
