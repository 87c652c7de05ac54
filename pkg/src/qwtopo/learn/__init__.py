"""From-scratch neural components: layers, models, training, SOM, PCA."""

from .layers import (AvgPool2D, Conv2D, Dense, ELU, Layer, ReLU,
                     SeparableConv2D, Softmax)
from .network import (NetworkModel, build_dnn6, build_mlp, build_model,
                      build_vanilla_cnn, feature_vectors, load_model,
                      save_model)
from .pca import pca
from .som import (SOMState, load_som, save_som, som_assign, som_fit,
                  som_init, som_step, som_time_constant)
from .train import (Adam, Metrics, TrainConfig, cross_entropy, evaluate,
                    train_supervised)

__all__ = [
    "AvgPool2D", "Conv2D", "Dense", "ELU", "Layer", "ReLU",
    "SeparableConv2D", "Softmax",
    "NetworkModel", "build_dnn6", "build_mlp", "build_model",
    "build_vanilla_cnn", "feature_vectors", "load_model", "save_model",
    "pca",
    "SOMState", "load_som", "save_som", "som_assign", "som_fit",
    "som_init", "som_step", "som_time_constant",
    "Adam", "Metrics", "TrainConfig", "cross_entropy", "evaluate",
    "train_supervised",
]
