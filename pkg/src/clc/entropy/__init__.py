"""Range coding, symbol models, latent coding and the CLCB container."""

from .bitstream import Bitstream, Header, read_bitstream, write_bitstream
from .latent_coding import (
    SliceSchedule,
    decode_hyper,
    decode_latent,
    encode_hyper,
    encode_latent,
    estimate_rate,
    quantize_residual,
)
from .model import gaussian_bin_mass, gaussian_bin_prob
from .rangecoder import RangeDecoder, RangeEncoder, rc_decode_symbol, rc_encode_symbol

__all__ = [
    "Bitstream",
    "Header",
    "read_bitstream",
    "write_bitstream",
    "SliceSchedule",
    "decode_hyper",
    "decode_latent",
    "encode_hyper",
    "encode_latent",
    "estimate_rate",
    "quantize_residual",
    "gaussian_bin_mass",
    "gaussian_bin_prob",
    "RangeDecoder",
    "RangeEncoder",
    "rc_decode_symbol",
    "rc_encode_symbol",
]
