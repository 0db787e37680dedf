"""Unitary triangularizations (GMD, JET, space-time K-GMD) and a
capacity-approaching MIMO multicast scheme built on them."""

from .capacity import (
    achievable_fraction,
    benchmark_beamforming_rate,
    build_example,
    min_channel_uses,
    multicast_capacity,
    mutual_information,
    timesharing_rate,
)
from .decomp import extend_blockdiag, embed, extract, gmd, jet2, kgmd_spacetime, verify_decomp
from .errors import (
    ConstraintViolation,
    InvalidInputError,
    NumericalFailure,
    SingularityError,
    StMulticastError,
)
from .linalg import Tolerance, hermitian_sqrt_factor, qr_decompose, svd
from .scheme import ChannelSet, augment, multicast_simulate, p2p_effective_snr, sic_decode

__version__ = "0.1.0"
