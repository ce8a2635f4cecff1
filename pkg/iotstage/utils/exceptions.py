"""
Custom exception classes
"""


class IoTStageError(Exception):
    """Base exception for the framework"""

    exit_code = 3
    code = "ERROR"

    def __init__(self, message, code=None, payload=None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.payload = payload

    def to_dict(self):
        rv = dict(self.payload or ())
        rv["error"] = self.__class__.__name__
        rv["code"] = self.code
        rv["message"] = self.message
        return rv


class ScenarioParseError(IoTStageError):
    """Scenario document could not be parsed"""

    exit_code = 2
    code = "PARSE_ERROR"


class ScenarioValidationError(IoTStageError):
    """Scenario violates one or more invariants"""

    exit_code = 2
    code = "INVALID_SCENARIO"

    def __init__(self, violations, message=None):
        self.violations = list(violations)
        super().__init__(
            message or "; ".join(str(v) for v in self.violations),
            payload={"violations": [v.to_dict() for v in self.violations]},
        )


class UnknownTargetError(IoTStageError):
    """Channel, node or entity selector does not resolve"""

    code = "UNKNOWN_TARGET"


class ScheduleInPastError(IoTStageError):
    """Event scheduled before the current simulation clock"""

    code = "SCHEDULE_IN_PAST"


class UnknownNodeError(IoTStageError):
    """Node id is not part of the scenario"""

    code = "UNKNOWN_NODE"


class UnknownEntityError(IoTStageError):
    """Entity id is not part of the domain simulation"""

    code = "UNKNOWN_ENTITY"


class IncompleteSnapshotError(IoTStageError):
    """Position snapshot misses a positioned node"""

    code = "INCOMPLETE_SNAPSHOT"


class UnknownBehaviorError(IoTStageError):
    """Behavior name is not registered"""

    code = "UNKNOWN_BEHAVIOR"


class DuplicateBehaviorError(IoTStageError):
    """Behavior name is already registered"""

    code = "DUPLICATE_BEHAVIOR"


class RestartWithoutCrashError(IoTStageError):
    """Restart requested for a node that is alive"""

    code = "RESTART_WITHOUT_CRASH"


class BehaviorError(IoTStageError):
    """A behavior callback raised"""

    code = "BEHAVIOR_ERROR"


class GatewayError(IoTStageError):
    """Hardware-in-the-loop gateway I/O failed"""

    code = "GATEWAY_ERROR"


class CalibrationError(IoTStageError):
    """Calibration probing failed"""

    code = "CALIBRATION_ERROR"


class EstimateImpossibleError(CalibrationError):
    """No probe replies, so no estimate can be formed"""

    code = "ESTIMATE_IMPOSSIBLE"


class RunAbortedError(IoTStageError):
    """A run stopped before reaching its duration"""

    code = "RUN_ABORTED"

    def __init__(self, message, partial=None, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


class UsageError(IoTStageError):
    """Command line could not be understood"""

    exit_code = 64
    code = "USAGE"
