"""Semi-targeted adversarial attacks on Thai license plate OCR pipelines.

Library layout:

* :mod:`plateforge.core` - image/label/RNG value types and arithmetic
* :mod:`plateforge.plate` - license-number grammar and plate synthesis
* :mod:`plateforge.oracle` - black-box classifiers (external OCR, synthetic)
* :mod:`plateforge.attack` - decision-based targeted attack engine
* :mod:`plateforge.semitarget` - candidate fan-out and selection
* :mod:`plateforge.assess` - legibility/reading interviews and ASR
* :mod:`plateforge.harness` - batch experiments, resources, reports
* :mod:`plateforge.review` - embedded review HTTP service
"""

from .core import (
    LicenseLabel,
    PlateImage,
    Rng,
    blend,
    clip,
    l2_distance,
    load_png,
    quantize8,
    sample_unit_sphere,
    save_png,
)
from .plate import (
    GlyphAtlas,
    PlateLayout,
    ThaiConsonantSet,
    default_layout,
    is_valid,
    micro_layout,
    procedural_atlas,
    random_label,
    render_plate,
    small_layout,
)
from .oracle import (
    CellMatchOracle,
    DecisionOracle,
    LinearOracle,
    NearestCentroidOracle,
    OcrEngineConfig,
    OracleTransportError,
    SyntheticOracleSpec,
    TesseractOracle,
    ThresholdOracle,
    make_phi,
    synthetic_classify,
)
from .attack import (
    AttackConfig,
    AttackResult,
    attack_targeted,
    estimate_direction,
    find_target_seed,
    geometric_step,
    initialize,
    project_to_boundary,
)
from .semitarget import (
    CandidateClass,
    ConfusabilityTable,
    SemiTargetedOutcome,
    generate_candidates,
    load_outcome,
    run_semi_targeted,
    select_auto,
    select_human,
)
from .assess import (
    AssessmentRecord,
    AssessmentVerdict,
    asr,
    judge,
    simulated_assessor,
)
from .harness import (
    ExperimentPlan,
    ExperimentSummary,
    emit_report,
    measure_resources,
    run_experiment,
)

__version__ = "0.1.0"
