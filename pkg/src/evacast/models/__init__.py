"""From-scratch dense numeric core: MLP, LSTM, RNN, Adam, MC dropout."""

from .adam import AdamConfig, AdamState, TrainHistory
from .gradcheck import gradient_check
from .mlp import MlpModel, init_mlp, mlp_forward, train_classifier
from .recurrent import (
    LstmModel,
    MCPrediction,
    RecurrentLayer,
    RnnModel,
    forward_batch,
    init_lstm,
    init_rnn,
    lstm_cell_step,
    mc_dropout_predict,
    sequence_forward,
    train_regressor,
)
from .serialize import load_model, save_model

__all__ = [
    "AdamConfig", "AdamState", "TrainHistory", "gradient_check",
    "MlpModel", "init_mlp", "mlp_forward", "train_classifier",
    "LstmModel", "RnnModel", "RecurrentLayer", "MCPrediction",
    "init_lstm", "init_rnn", "lstm_cell_step", "sequence_forward",
    "forward_batch", "mc_dropout_predict", "train_regressor",
    "load_model", "save_model",
]
