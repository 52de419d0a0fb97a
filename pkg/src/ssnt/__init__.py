"""Segment-to-segment neural transduction.

A seq2seq model with a latent monotone alignment deciding when to read input
and when to emit output: exact marginalisation over alignments for training,
joint generate-and-align DP decoding, and noisy-channel decoding that combines
a channel model with a recurrent language model.
"""

from .decoding import (CombinationWeights, DecodeResult, beam_decode,
                       combination_score, greedy_decode, noisy_channel_decode)
from .lm import LmConfig, LmModel, lm_logprob, perplexity
from .model import (Lattice, Posteriors, SsntConfig, SsntModel, backward_chart,
                    brute_force_marginal, example_gradient, forward_chart,
                    mle_emission, nll_loss, posteriors)
from .nn import LstmParams, LstmState, Parameter
from .vocab import Vocabulary

__all__ = [
    "CombinationWeights", "DecodeResult", "beam_decode", "combination_score",
    "greedy_decode", "noisy_channel_decode", "LmConfig", "LmModel",
    "lm_logprob", "perplexity", "Lattice", "Posteriors", "SsntConfig",
    "SsntModel", "backward_chart", "brute_force_marginal", "example_gradient",
    "forward_chart", "mle_emission", "nll_loss", "posteriors", "LstmParams",
    "LstmState", "Parameter", "Vocabulary",
]

__version__ = "0.1.0"
