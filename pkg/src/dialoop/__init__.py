"""FSM-guided selective-generation dialogue framework with a self-training loop."""

from .augment import (
    SyntheticDialogue,
    TrainingExample,
    distribution_report,
    generate_corpus,
    sample_path,
    sample_reply,
    synthesize_dialogue,
    to_training_examples,
)
from .ensemble import (
    ConfidenceReport,
    EvalPair,
    RoutingDecision,
    Thresholds,
    combined_confidence,
    discriminative_score,
    evaluation_error_rate,
    generative_score,
    make_eval_pairs,
    score_record,
    vote_and_route,
)
from .fsm import (
    FsmGraph,
    FsmValidationError,
    Option,
    OptionSet,
    Transition,
    candidate_options,
    enumerate_paths,
    load_fsm,
    load_fsm_path,
    to_document,
)
from .gateway import (
    BackendProfile,
    GatewayTimeout,
    JudgeVerdict,
    LlmGateway,
    TokenScore,
)
from .loop import GrowBatch, IterationLoop, IterationManifest
from .manager import (
    AgentAction,
    GenerationRecord,
    SessionState,
    build_prompt,
    parse_output,
    run_session,
    start_session,
    step,
    validate_and_fallback,
)
from .metrics import MetricsSnapshot, compute_cr, compute_tsr, hallucination_rate
from .prompts import PromptStore, PromptVersion
from .review import ReviewItem, ReviewStore, ReviewVerdict
from .simulator import NoiseConfig, OwnerProfile, build_testset, inject_asr_noise, respond

__version__ = "0.1.0"
