"""Risk-management maturity assessment: Likert scoring against staged level thresholds."""

from .model import (
    MaturityModel,
    ModelError,
    ResponseSet,
    builtin_checklist,
    builtin_model,
    builtin_models,
    parse_model,
    parse_responses,
    serialize_model,
    serialize_responses,
    validate_model,
)
from .report import RenderedReport, parse_report, render, render_trend
from .scoring import (
    AdherenceBand,
    AssessmentReport,
    GapPlan,
    LevelScore,
    ScoringError,
    aggregate,
    classify_adherence,
    determine_level,
    gap_analysis,
    score_assessment,
    score_groupings,
    score_level,
)
from .storage import load_history, store

__version__ = "0.1.0"
