from pairtopk.train.metrics import Metrics, accuracy, compute_metrics, metrics_from_confusion
from pairtopk.train.trainer import (
    TrainConfig,
    TrainResult,
    evaluate,
    predict,
    predict_labels,
    sweep_k,
    train,
)
