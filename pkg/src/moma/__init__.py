"""Building-wide mobile manipulation agent driven by a vision-language model, plus its simulator and harness."""

from .backends import (HttpBackend, HttpConfig, LessonSensitiveOracle, OracleBackend, OracleErrorProfile,
                       ReplayBackend, make_backend)
from .engine import MODES, EngineConfig, TrialResult, decide_and_act, run_trial
from .memory import FailureLesson, LongTermStore, ShortTermMemory, curate_lessons
from .percept import PerceptionNoiseConfig, observe
from .world import WorldState, check_task_success, load_world

__all__ = [
    "EngineConfig", "FailureLesson", "HttpBackend", "HttpConfig", "LessonSensitiveOracle", "LongTermStore", "MODES",
    "OracleBackend", "OracleErrorProfile", "PerceptionNoiseConfig", "ReplayBackend", "ShortTermMemory",
    "TrialResult", "WorldState", "check_task_success", "curate_lessons", "decide_and_act", "load_world",
    "make_backend", "observe", "run_trial",
]
__version__ = "0.1.0"
