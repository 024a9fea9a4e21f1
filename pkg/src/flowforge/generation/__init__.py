from .engine import (
    BudgetExceededError,
    ConstraintViolationError,
    ConstraintViolationRecord,
    GeneratorContract,
    GeneratorFaultError,
    SubTaskCancelled,
    SubTaskResult,
    constrain_output,
    run_sub_task,
)
from .events import (
    ChoicesRequest,
    Done,
    Fragment,
    GenerationEvent,
    PromptState,
    SubTask,
    TeacherForcingConfig,
    TranscriptEntry,
    choices_from_transcript,
    events_from_transcript,
    is_well_bracketed,
    load_transcript,
    render_choices_block,
    save_transcript,
)
from .generators import (
    HttpGenerator,
    PipelineGenerator,
    ScriptedGenerator,
    available_generators,
    create_generator,
    parse_sentinel_text,
    register_generator,
)
from .reference import (
    NoTriggerClauseError,
    ReferenceGenerator,
    UnresolvedReferenceError,
    UnresolvedTableError,
    UnresolvedValueError,
    reference_create_flow,
    reference_populate_inputs,
    segment_requirement,
)

__all__ = [
    "BudgetExceededError",
    "ConstraintViolationError",
    "ConstraintViolationRecord",
    "GeneratorContract",
    "GeneratorFaultError",
    "SubTaskCancelled",
    "SubTaskResult",
    "constrain_output",
    "run_sub_task",
    "ChoicesRequest",
    "Done",
    "Fragment",
    "GenerationEvent",
    "PromptState",
    "SubTask",
    "TeacherForcingConfig",
    "TranscriptEntry",
    "choices_from_transcript",
    "events_from_transcript",
    "is_well_bracketed",
    "load_transcript",
    "render_choices_block",
    "save_transcript",
    "HttpGenerator",
    "PipelineGenerator",
    "ScriptedGenerator",
    "available_generators",
    "create_generator",
    "parse_sentinel_text",
    "register_generator",
    "NoTriggerClauseError",
    "ReferenceGenerator",
    "UnresolvedReferenceError",
    "UnresolvedTableError",
    "UnresolvedValueError",
    "reference_create_flow",
    "reference_populate_inputs",
    "segment_requirement",
]
