"""Small numpy deep-learning engine and the lightweight CNN."""

from .complexity import analyze, count_madd, count_params
from .layers import BatchNorm2D, Conv2D, Dense, Dropout, Flatten, MaxPool2, ReLU, Softmax
from .model import (
    AdamConfig,
    AdamState,
    ModelSpec,
    Weights,
    adam_step,
    backward,
    build_proposed,
    calibrate_batchnorm,
    forward,
    init_weights,
    load_checkpoint,
    save_checkpoint,
)
from .train import EpochRecord, TrainConfig, TrainResult, evaluate, predict_proba, train, write_log
