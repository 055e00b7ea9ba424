"""Hand-gesture recognition from WiFi received signal strength.

Raw per-AP RSSI traces are denoised with a Haar wavelet transform, cut into
rising edges, falling edges and pauses, gated by a preamble gesture, fused
across access points by majority vote, matched against gesture-family
templates and finally mapped to application actions.  A simulator with
ground truth drives the evaluation.
"""
from .actions import ActionEvent, ActionRule, CountPredicate, RuleSet, load_rules, map_action, parse_rules
from .denoise import DenoiseConfig, denoise, denoise_signal, sure_threshold
from .errors import ConfigError, DomainError, EmptyInputError, RssiGestError, StageError, TraceFormatError
from .fusion import ApDecision, fuse, fuse_events
from .gestures import GestureEvent, GestureTemplate, TemplateSet, classify_window, encode, load_templates, match
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .primitives import ExtractorConfig, Kind, Magnitude, PrimitiveEvent, Speed, detect_edges, detect_pauses, extract_primitives
from .segment import (
    CalibrationProfile,
    Direction,
    GestureWindow,
    PreambleDetector,
    SegmenterConfig,
    detect_preamble,
    resolve_polarity,
    segment_gestures,
)
from .simulate import Gesture, GroundTruth, InterferenceBurst, Preamble, ScenarioScript, generate_scenario
from .trace import RssiTrace, TraceBundle, load_trace, save_trace
from .wavelet import dwt_decompose, dwt_reconstruct

__version__ = "0.1.0"
