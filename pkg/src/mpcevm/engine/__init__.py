from .messages import Kind, MpcMessage, cheater_result, result_hash, success_result
from .party import (ACTIVATION_POINTS, EngineError, FaultBehavior, FaultSpec, PartySession,
                    SessionConfig, ShapeMismatch, StalledGate, init_session, make_session_config)
from .plan import Plan, PlanError, build_plan, mask_bits_for

__all__ = [
    "ACTIVATION_POINTS", "EngineError", "FaultBehavior", "FaultSpec", "Kind", "MpcMessage",
    "PartySession", "Plan", "PlanError", "SessionConfig", "ShapeMismatch", "StalledGate",
    "build_plan", "cheater_result", "init_session", "make_session_config", "mask_bits_for",
    "result_hash", "success_result",
]
