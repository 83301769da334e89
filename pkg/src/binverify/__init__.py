"""Binary verification for zero-shot vision queries.

Quantize an open query into a shortlist of candidates, ask one True/False
question per candidate, and resolve the verdict pattern deterministically.
"""

from .errors import (
    BackendError,
    BinVerifyError,
    ConfigurationError,
    ContractViolationError,
    InvalidInputError,
    ManifestError,
    UndefinedThresholdError,
    UnparseableAnswerError,
)
from .quantize import (
    Alphabet,
    Candidate,
    Detection,
    GridSpec,
    ShortlistConfig,
    build_class_extraction_prompt,
    make_grid_alphabet,
    native_label_alphabet,
    shortlist_detections,
)
from .raster import OverlayStyle, RasterImage, draw_grid, highlight_box, highlight_cell
from .resolution import (
    Action,
    BooleanPattern,
    Branch,
    ResolutionConfig,
    ResolutionOutcome,
    resolve,
    run_protocol,
)
from .verifiers import (
    ClaimQuery,
    HttpVerifier,
    McqQuery,
    ScriptedVerifier,
    SimulatedVerifier,
    SimulatorParams,
    Verdict,
    parse_verdict,
)

__version__ = "0.1.0"
