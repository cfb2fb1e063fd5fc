"""Alignment lattice, segment merging, length policy and cost model for vision concept modeling."""

from .alignment import (
    BLANK,
    KEEP,
    AlignmentLattice,
    EmissionSequence,
    ExtendedTarget,
    LogitSequence,
    SpaceMode,
    backward_pass,
    best_path_decode,
    brute_force_probability,
    compute_lattice,
    count_runs,
    extend_target,
    forward_pass,
    max_concepts,
    path_to_mask,
    posterior,
    sequence_probability,
    vcm_gradient,
    vcm_loss,
    vcm_loss_and_gradient,
)
from .concepts import ConceptSegments, SelectionMask, greedy_select, merge_batch, merge_segments
from .errors import (
    DegenerateProbability,
    DimensionMismatch,
    InfeasibleLength,
    InvalidInput,
    NonConvergence,
    OracleTooLarge,
    VCMError,
)
from .flops import FlopsProfile, flops_exact, flops_expected, reduction_ratio
from .length import (
    CoefficientParams,
    KeywordStats,
    LengthConfig,
    effective_keyword_diff,
    epsilon,
    estimate_length,
    total_loss,
)
from .trainer import TrainConfig, TrainTrace, masked_curriculum, train_logits

__version__ = "0.1.0"
