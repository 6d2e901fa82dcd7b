from .checkpoint import load_checkpoint, save_checkpoint
from .gae import compute_gae, normalize_advantages
from .nets import MlpSpec, clamped_log_std, forward, init_params
from .trainer import NonFiniteLoss, PpoConfig, PpoTrainer, loss_and_grad, train

__all__ = [
    "MlpSpec",
    "NonFiniteLoss",
    "PpoConfig",
    "PpoTrainer",
    "clamped_log_std",
    "compute_gae",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss_and_grad",
    "normalize_advantages",
    "save_checkpoint",
    "train",
]
