"""Error hierarchy shared by the library modules and the management commands."""


class ForecastAttackError(Exception):
    """Root of every domain error; carries a stable code for machine output."""

    code = "forecast_attack_error"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        return {"error": self.code, "message": self.message, "details": self.details}


# dataio

class DataError(ForecastAttackError):
    code = "data_error"


class MalformedRow(DataError):
    code = "malformed_row"


class TimestampGap(DataError):
    code = "timestamp_gap"


class NonPositiveLoad(DataError):
    code = "non_positive_load"


class ConstantFeature(DataError):
    code = "constant_feature"


class UnknownFeature(DataError):
    code = "unknown_feature"


class InsufficientHistory(DataError):
    code = "insufficient_history"


class EmptySplit(DataError):
    code = "empty_split"


# neuralnet

class ModelError(ForecastAttackError):
    code = "model_error"


class BadShape(ModelError):
    code = "bad_shape"


class ShapeMismatch(ModelError):
    code = "shape_mismatch"


class Diverged(ModelError):
    code = "diverged"


class CheckpointError(ModelError):
    code = "checkpoint_error"


# attacks

class AttackError(ForecastAttackError):
    code = "attack_error"


class BarrierDomain(AttackError):
    code = "barrier_domain"


class QueryBudgetExhausted(AttackError):
    code = "query_budget_exhausted"


# milp

class SolverError(ForecastAttackError):
    code = "solver_error"


class NumericalBreakdown(SolverError):
    code = "numerical_breakdown"


class NodeLimitReached(SolverError):
    code = "node_limit"


# grid

class CaseError(ForecastAttackError):
    code = "case_error"


class SchemaError(CaseError):
    code = "schema_error"


class DisconnectedGraph(CaseError):
    code = "disconnected_graph"


class NoReferenceBus(CaseError):
    code = "no_reference_bus"


class BadShares(CaseError):
    code = "bad_shares"


class InsufficientCapacity(CaseError):
    code = "insufficient_capacity"


# operations

class OperationsError(ForecastAttackError):
    code = "operations_error"


class InstanceError(OperationsError):
    code = "instance_error"


class UCInfeasible(OperationsError):
    code = "uc_infeasible"


# pipeline

class PipelineError(ForecastAttackError):
    code = "pipeline_error"


class ConfigError(PipelineError):
    code = "config_error"


class MissingArtifacts(PipelineError):
    code = "missing_artifacts"
