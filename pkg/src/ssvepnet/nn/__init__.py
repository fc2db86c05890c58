from .layers import relu, softmax, softmax_cross_entropy
from .model import NetArch, TwoStreamNet
from .train import TrainConfig, TrainResult, train
