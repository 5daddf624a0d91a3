"""Layers, model assembly, footprint profiling and batchnorm folding."""

from .config import (Attention, Conv, DeltaFixedConv, Dense, Dropout, Gru, ModelConfig,
                     REFERENCE_CONFIGS, TimeSum, cnn_like, crnn58k_ref, crnn239k_ref,
                     dnn_like, reference_config)
from .layers import attention_forward, forward_gru, gru_step
from .model import Posterior, forward_batch, forward_model, run_layers
from .profile import Footprint, frames_per_step, profile, receptive_field, temporal_specs
from .weights import (Weights, fold_batchnorm, init_weights, load_model, param_shapes,
                      save_model)
