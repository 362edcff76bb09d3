"""Toy radiance field: MLPs, rays, sampling, compositing, training, synthesis."""

from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
from .mlp import ConfigurationError, MLPParams, init_mlp, mlp_backward, mlp_forward
from .model import (
    EncodingConfig,
    RadianceFieldModel,
    init_model,
    positional_encode,
    query_field,
    query_proposal,
    render_rays,
    zero_model,
)
from .rays import Ray, camera_rays, trace_ray
from .render import (
    RadianceSample,
    RenderConfig,
    composite,
    sample_coarse,
    sample_fine,
    volume_render,
)
from .train import TrainConfig, TrainingDivergence, loss_and_grad, synthesize_view, train
