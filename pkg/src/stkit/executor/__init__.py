from .checkpoint import (Checkpoint, average_checkpoints, list_checkpoints, load_checkpoint, prune_checkpoints,
                         restore_model, save_checkpoint)
from .decoding import (BeamHypothesis, EnsembleScorer, PrefixScorer, beam_search, decode, ensemble_decode,
                       greedy_decode)
from .trainer import (CascadeOutput, TrainOptions, TrainResult, cascade_decode, predict, read_metrics, train,
                      validate, warm_start)

__all__ = ["Checkpoint", "average_checkpoints", "list_checkpoints", "load_checkpoint", "prune_checkpoints",
           "restore_model", "save_checkpoint", "BeamHypothesis", "EnsembleScorer", "PrefixScorer", "beam_search",
           "decode", "ensemble_decode", "greedy_decode", "CascadeOutput", "TrainOptions", "TrainResult",
           "cascade_decode", "predict", "read_metrics", "train", "validate", "warm_start"]
