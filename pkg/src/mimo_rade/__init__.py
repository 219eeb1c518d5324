"""Randomized decoders for square MIMO channels with PSK symbols."""

from .channel import (
    ChannelModel,
    Constellation,
    DecodeOutcome,
    Message,
    generate_channel,
    make_constellation_psk,
    precompute,
    residual_stat,
    sample_message,
    transmit,
)
from .decoders import (
    DecoderTrace,
    Rade1Params,
    Rade2Params,
    brute,
    nnx,
    rade1_all,
    rade1_search,
    rade2_all,
    rade2_search,
    supercharge,
)
from .linalg_core import SeededRng
from .neighbors import NeighborList, build_base_neighbor_list, nearest_in_x, neighbors_of

__version__ = "0.1.0"
