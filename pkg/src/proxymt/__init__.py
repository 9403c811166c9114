"""Multitaper spectral density estimation on irregular lattice domains with proxy Slepian tapers."""

from .errors import ContractError, DomainError, GridFileError, MultitaperError, NumericError, ResourceError
from .grid import (CornerSubgrids, DomainMask, corner_subgrids_mask, digital_perimeter, disk_complement_mask,
                   disk_mask, full_mask, rectangle_mask)
from .operator import (BandwidthSpec, ConcentrationOperator, apply_concentration, dense_operator, make_bandwidth,
                       trace_diagnostics)
from .fields import FieldSample, SpectralGrid
from .tapers import (TaperSet, accumulated_spectral_window, proxy_tapers, rotate_tapers, slepian_1d,
                     spectral_window_l1_error, tensor_tapers)
from .estimator import cmt_estimate, mper_estimate, multitaper_estimate, tapered_periodogram
from .simulate import DensitySpec, sample_field, synthetic_projection, triple_disk_density

__version__ = "0.1.0"
