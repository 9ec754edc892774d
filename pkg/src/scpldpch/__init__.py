"""Spatially coupled protograph LDPC-Hadamard codes: construction, analysis and simulation."""

__version__ = "0.1.0"

from .protograph import Protomatrix, SplitSet, load_split, rate_block, rate_terminated, validate_split
from .hadamard import HadamardCode, decode_map
from .lifting import lift, lift_split
from .codec import CcCode, PipelineDecoder, build_code
from .pexit import LayeredPexit, MiSampleConfig, layered_pexit_converges, threshold_search
from .ga import GaConfig, Individual, evolve, fitness
from .sim import BerRecord, ChannelModel, run_ber

__all__ = [
    "Protomatrix", "SplitSet", "load_split", "rate_block", "rate_terminated", "validate_split",
    "HadamardCode", "decode_map", "lift", "lift_split", "CcCode", "PipelineDecoder", "build_code",
    "LayeredPexit", "MiSampleConfig", "layered_pexit_converges", "threshold_search",
    "GaConfig", "Individual", "evolve", "fitness", "BerRecord", "ChannelModel", "run_ber",
]
