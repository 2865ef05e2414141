"""Clinical contrastive decoding: a two-stage, expert-guided logit fusion
engine with a synthetic evaluation world and experiment harness."""

from .backends import (
    BoundToyModel,
    ExpertBackend,
    FixedExpert,
    LogitsTrace,
    ModelBackend,
    NoisyExpert,
    RandomExpert,
    ReplayModel,
    ToyReportModel,
    TraceError,
    TraceRecord,
    read_trace,
    replay_next_logits,
    write_trace,
)
from .engine import (
    DecodeConfig,
    Generation,
    GenerationError,
    StepRecord,
    adjust_step,
    ccd_step,
    ecd_step,
    generate,
    next_token,
    plain_decode,
    scd_step,
    write_step_trace,
)
from .expert import (
    ClinicalLabel,
    ClinicalLabelSet,
    TokenMap,
    UnmappedLabelError,
    build_anchor_prompt,
    build_bias_map,
    clip_bias,
    filter_labels,
    label_bias,
    load_label_set,
    load_token_map,
    save_label_set,
    save_token_map,
)
from .logits import DegenerateLogitsError, argmax, interpolate, log_softmax, softmax
from .metrics import (
    AggregateReport,
    EpisodeResult,
    aggregate,
    extract_mentions,
    rouge_l,
    symptom_prf,
)
from .processors import (
    ProcessorConfig,
    apply_repetition_penalty,
    apply_top_k,
    apply_top_p,
    enforce_min_length,
    run_stack,
)
from .vocab import SYMPTOM_NAMES, Vocabulary, build_toy_vocabulary, symptom_names
from .world import (
    LatentCase,
    WorldParams,
    load_cases,
    reference_report,
    sample_case,
    save_cases,
)

__version__ = "0.1.0"
