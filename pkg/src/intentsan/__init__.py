"""Intent detection with self-attention over LSTM / Bi-LSTM encoders, on a hand-written numpy core."""

from .data import Example, Vocab, generate_synthetic, load_dataset, preprocess, split
from .evaluation import confusion, metrics, predict
from .model import ModelParams, forward, init_model
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Example", "Vocab", "generate_synthetic", "load_dataset", "preprocess", "split",
    "confusion", "metrics", "predict", "ModelParams", "forward", "init_model",
    "TrainConfig", "load_checkpoint", "save_checkpoint", "train",
]
