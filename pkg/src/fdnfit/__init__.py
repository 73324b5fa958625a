"""Learn every parameter of a feedback delay network from a room impulse response."""
from .audio import Rir, load_wav, normalize_unit_norm, prepare, resample, save_wav, trim_to_onset
from .baselines import HrtcConfig, hrtc_build, hrtc_gamma
from .fdn import (ConstrainedParams, DelayLineBank, UnconstrainedParams, constrain,
                  delay_kernel, init_params, render_constrained, render_ir)
from .losses import CompositeLoss, LossConfig, composite_loss, edc, edc_loss, edp, edp_loss, soft_edp
from .metrics import AcousticMetrics, compute_metrics, estimate_t60, metric_deltas
from .train import TrainConfig, TrainReport, adam_step, fit

__version__ = "0.1.0"
