"""Distance-3 triangular color code: circuits, decoders, cycles and fault checks."""

from .backend import Backend, FrameBackend, IdealBackend, fault_locations
from .circuit import Circuit, Op
from .code import (N_DATA, PLAQUETTES, SPEC, StabilizerSpec, codespace_projector,
                   data_pauli, in_stabilizer_group, logical_basis, logical_class,
                   logical_state, min_weight_equivalent)
from .cycle import CycleReport, EncodingReport, encode, qec_cycle_cat, qec_cycle_flag
from .propagate import NotClifford, conjugate, propagate_pauli
from .readout import (build_basis_measurement, build_cat_readout, build_flag_readout,
                      build_ft_encoding, build_logical_readout, build_transversal,
                      build_unflagged_readout)
from .tables import CatOutcome, FlagOutcome, decode_cat, decode_flag, parse_label

__all__ = [
    "Backend", "FrameBackend", "IdealBackend", "fault_locations", "Circuit", "Op",
    "N_DATA", "PLAQUETTES", "SPEC", "StabilizerSpec", "codespace_projector", "data_pauli",
    "in_stabilizer_group", "logical_basis", "logical_class", "logical_state",
    "min_weight_equivalent", "CycleReport", "EncodingReport", "encode", "qec_cycle_cat",
    "qec_cycle_flag", "NotClifford", "conjugate", "propagate_pauli",
    "build_basis_measurement", "build_cat_readout", "build_flag_readout",
    "build_ft_encoding", "build_logical_readout", "build_transversal",
    "build_unflagged_readout", "CatOutcome", "FlagOutcome", "decode_cat", "decode_flag",
    "parse_label",
]
