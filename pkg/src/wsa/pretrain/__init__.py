"""Frame collection and the frozen encoders trained on it."""
from .dataset import FrameDataset, collect_dataset, load_dataset, save_dataset
from .encoders import (CANONICAL_ORDER, EMBEDDING_SHAPES, KINDS, Encoder, EncoderSet, load_encoder,
                       load_params, save_encoder)
from .train import (TRAINERS, PretrainConfig, TrainResult, info_nce, motion_target, train_autoencoder,
                    train_keypoint, train_motion_mask, train_temporal_contrastive)

__all__ = ["FrameDataset", "collect_dataset", "load_dataset", "save_dataset", "CANONICAL_ORDER",
           "EMBEDDING_SHAPES", "KINDS", "Encoder", "EncoderSet", "load_encoder", "load_params",
           "save_encoder", "TRAINERS", "PretrainConfig", "TrainResult", "info_nce", "motion_target",
           "train_autoencoder", "train_keypoint", "train_motion_mask", "train_temporal_contrastive"]
