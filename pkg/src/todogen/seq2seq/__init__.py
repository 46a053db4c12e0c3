"""To-Do generation: input serialization, encoder/decoder variants with
attention and copying, training, and beam-search decoding."""

from .decoding import DecodeResult, beam_search, greedy_decode
from .model import (Batch, DecodeSession, EncodedExample, ModelConfig,
                    Seq2SeqModel, encode_example, make_batch)
from .serialize import (DEFAULT_MAX_INPUT_TOKENS, EncoderInput, ExtendedVocab,
                        concatenate_baseline, serialize_input)
from .training import (EpochRecord, TrainConfig, TrainLog, TrainingError,
                       evaluate_token_stats, train)

__all__ = [
    "Batch", "DecodeResult", "DecodeSession", "DEFAULT_MAX_INPUT_TOKENS",
    "EncodedExample", "EncoderInput", "EpochRecord", "ExtendedVocab",
    "ModelConfig", "Seq2SeqModel", "TrainConfig", "TrainLog", "TrainingError",
    "beam_search", "concatenate_baseline", "encode_example",
    "evaluate_token_stats", "greedy_decode", "make_batch", "serialize_input",
    "train",
]
