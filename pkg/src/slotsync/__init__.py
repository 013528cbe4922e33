"""Optimal detection and decoding for slotted asynchronous channels.

Submodules: :mod:`probability`, :mod:`channel`, :mod:`detector`,
:mod:`frontier`, :mod:`exponents`, :mod:`validation` and :mod:`cli`.
"""
__version__ = "0.1.0"

from .probability import (
    Distribution,
    JointDistribution,
    TypeDescriptor,
    conditional_kl,
    empirical_joint,
    enumerate_joint_types,
    kl_divergence,
    log_type_class_size,
    mutual_information,
    simplex_grid,
)
from .channel import Codebook, Dmc, EnsembleConfig, codebook_size, make_rng, sample_codebook, transmit, validate_dmc
from .detector import (
    REJECT,
    DetectorParams,
    detect_and_decode,
    detect_max_variant,
    detect_np_variant,
    dominance_check,
    exact_error_probabilities,
    rejection_margin,
)
from .exponents import ExponentProblem, ExponentReport, compute_exponents
