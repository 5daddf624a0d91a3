"""Synthetic data, hand-derived gradients, Adam and the training loop."""

from .backprop import backward, cross_entropy, loss_and_grads
from .gradcheck import grad_check, tiny_configs
from .loop import History, accuracy, history_steps, predict, train_loop
from .optim import AdamState, TrainConfig, adam_init, adam_step
from .synthetic import (Dataset, SyntheticSpec, chirp_template, gen_synthetic,
                        matched_filter_accuracy, matched_filter_scores)
