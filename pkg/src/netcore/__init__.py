from .gradcheck import GradCheckResult, finite_diff_check, relative_error
from .layers import LayerGrad, LinearLayer, Mlp, Taps, mlp_backward, mlp_forward
from .losses import softmax_cross_entropy
from .optim import is_decayed, sgd_step
from .tensor import RngState, Tensor, as_tensor, check_finite, init_gaussian

__all__ = [
    'GradCheckResult', 'finite_diff_check', 'relative_error',
    'LayerGrad', 'LinearLayer', 'Mlp', 'Taps', 'mlp_backward', 'mlp_forward',
    'softmax_cross_entropy', 'is_decayed', 'sgd_step',
    'RngState', 'Tensor', 'as_tensor', 'check_finite', 'init_gaussian',
]
