"""Online anchor-based training: a small numpy training engine and experiment CLI."""

from .data import Batch, Dataset, epoch_batches, load_cifar10, load_mnist_idx, synth_blobs
from .nnet import (Conv2d, Dense, Flatten, MaxPool2x2, Network, OptimizerState, ReLU,
                   backward, cross_entropy_loss, forward, init_network, lightweight_cifar,
                   load_network, mlp, save_network, sgd_step)
from .oat import (AnchorVector, anchor_of_outputs, inverse_transform, oat_loss_and_grad,
                  oat_targets, predict_classes)
from .trainer import EpochMetrics, History, TrainConfig, evaluate, grad_check, run_training

__version__ = "0.1.0"
