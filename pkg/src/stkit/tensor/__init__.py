"""Minimal dense-tensor engine with reverse-mode autodiff."""
from .core import Tensor, as_tensor, backprop, default_dtype, is_grad_enabled, no_grad, precision, set_default_dtype
from . import ops
from .gradcheck import check_gradients, check_parameter_gradients, relative_error
from .losses import label_smoothed_ce
from .optim import AdamState, ScheduleConfig, adam_update, noam_lr, scale_factor

__all__ = [
    "Tensor", "as_tensor", "backprop", "default_dtype", "is_grad_enabled", "no_grad", "precision",
    "set_default_dtype", "ops", "check_gradients", "check_parameter_gradients", "relative_error", "label_smoothed_ce", "AdamState", "ScheduleConfig", "adam_update",
    "noam_lr", "scale_factor",
]
