"""Holonomy groups of parametrized bosonic Hamiltonians and particle-number thresholds."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, ConvergenceError, CutoffConvergenceError,
                     FrameDegeneracyError, HolopntError, ModelInputError, NumericalFailure,
                     ReliabilityWarning, StepSizeError)
from .fock import FockBasis, ModeSystem, enumerate_graded, enumerate_layer, enumerate_truncated
from .models import (ModelSpec, ParameterPoint, builtin, compose, hamiltonian_at, load_model,
                     parse_model, serialize, unitary_at)
from .spectral import BlockSelector, EigenspaceBlock, EigenspaceFamily, LocalFrameField, local_frame
from .geometry import (ConnectionField, CurvatureSet, LieSpanResult, connection_at,
                       holonomy_dimension, jet_tensors, lie_algebra_dimension)
from .holonomy import (HolonomyResult, ParameterLoop, adiabatic_check, commutator_defect,
                       geometric_phase_area, geometric_phase_line, holonomy_ordered_exp,
                       holonomy_projector_transport, parse_loop)
from .pnt import PntReport, ScanConfig, composite_pnt, pnt_scan, table_report
