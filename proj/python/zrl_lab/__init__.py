"""Star-graph RL lab: task generation, estimators, a tiny policy and training."""

import json as _json

from ._core import (
    BudgetError,
    ConfigError,
    ContractError,
    EncodingError,
    FatalTrainingError,
    ModelConfig,
    Policy,
    TaskInstance,
    TransportError,
    Vocab,
    bon_coefficients,
    bon_weights,
    build_mixture,
    chunk_spans,
    evaluate_checkpoint,
    extract_answer,
    gen_data,
    generate_instance,
    group_advantages,
    kl_schedule,
    progress_coefficients,
    render_prompt,
    score,
    score_text,
    train,
    vineppo_coefficients,
)
from ._core import read_metrics as _read_metrics


def read_metrics(path):
    """Records of a metrics.jsonl file as dicts, plus warnings for skipped lines."""
    lines, warnings = _read_metrics(str(path))
    return [_json.loads(line) for line in lines], list(warnings)


__all__ = [name for name in dir() if not name.startswith("_")]
