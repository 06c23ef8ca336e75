from __future__ import annotations

from typing import Dict, Optional


class MapFuseError(Exception):
    """Base mapfuse exception."""


# -- settings -----------------------------------------------------------------


class SettingsError(MapFuseError):
    """Base for parameter registry and settings failures."""


class SettingsValidationError(SettingsError):
    """Raised when validation fails for one or more parameters."""

    def __init__(
        self, errors: Dict[str, str], key: str | None = None, value: object | None = None
    ) -> None:
        self.errors = errors
        self.key = key
        self.value = value
        msg = f"Validation errors: {errors}"
        if key is not None and value is not None:
            msg += f" (key: {key}, value: {value})"
        super().__init__(msg)


class SettingsLockedError(SettingsError):
    """Raised when attempting mutation while settings are locked."""


class SettingsNotFoundError(SettingsError):
    """Raised when a requested parameter is not registered."""


class SettingsDuplicateError(SettingsError):
    """Raised when attempting to register a duplicate parameter."""


class ExperimentConfigError(SettingsError):
    """Raised for experiment config schema violations.

    ``line`` is the 1-based line of the offending key in the config document when it
    could be located.
    """

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None) -> None:
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


# -- estimation ---------------------------------------------------------------


class EstimationError(MapFuseError):
    """Base for geometric and numerical estimation failures."""


class InvalidTransformError(EstimationError, ValueError):
    """Raised when a rotation, transform or cloud violates its construction invariants."""


class DegenerateGeometryError(EstimationError):
    """Raised when correspondences cannot determine the requested quantity."""


class InsufficientMatchesError(EstimationError):
    """Raised when fewer correspondences than required are available."""


class NumericalError(EstimationError):
    """Raised when an input would make a computation numerically meaningless."""


class BoundaryError(EstimationError):
    """Raised when a loop closure sits at a track endpoint and lacks adjacent keyframes."""


class NoAcceptablePairError(EstimationError):
    """Raised when no pair of scale estimates passes the selection conditions."""


class TooFewPointsError(EstimationError):
    """Raised when a cloud has fewer points than registration requires."""


class SingularHessianError(EstimationError):
    """Raised when the registration cost Hessian is too ill-conditioned to invert."""


# -- pose graph ---------------------------------------------------------------


class PoseGraphError(MapFuseError):
    """Base for pose graph construction and optimization failures."""


class MissingEstimateError(PoseGraphError):
    """Raised when an edge required by a graph configuration was not computed."""


class NotConnectedError(PoseGraphError):
    """Raised when the pose graph has more than one connected component."""


class GaugeUnfixedError(PoseGraphError):
    """Raised when no node of the graph is held fixed."""


# -- sessions -----------------------------------------------------------------


class SessionError(MapFuseError):
    """Base for agent session failures."""


class SessionTimeoutError(SessionError):
    """Raised when a replayed stream ends without any loop closure."""


class DisconnectedAgentsError(SessionError):
    """Raised when merge notices do not connect every agent to the root."""


class CyclicMergeError(SessionError):
    """Raised when merge notices form a cycle over agents."""


class FramingError(SessionError):
    """Raised for malformed or unsupported wire frames."""


# -- scenarios and evaluation -------------------------------------------------


class ScenarioError(MapFuseError):
    """Raised when a scenario cannot be generated or loaded."""


class LengthMismatchError(MapFuseError):
    """Raised when compared trajectories differ in length."""
