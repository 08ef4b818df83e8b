"""gnncca: cross-camera detection association with a trainable message
passing network, plus the baselines, metrics and synthetic data needed to
exercise it end to end."""

from .errors import (
    ArgumentError,
    ConfigError,
    DataError,
    GnnccaError,
    ProjectionError,
    ShapeError,
    TrainingError,
)
from .featurize import (
    CameraCalibration,
    DescriptorStore,
    appearance_delta,
    project_to_ground,
    spatial_delta,
)
from .graph import (
    Clustering,
    Detection,
    FrameGraph,
    build_frame_graph,
    connected_components,
    find_bridges,
)
from .inference import ProbGraph, associate, binarize, prune, split
from .metrics import (
    ami,
    ari,
    evaluate_sequence,
    homogeneity_completeness_v,
)
from .mpn import (
    ModelParams,
    init_model_params,
    mpn_forward,
    graph_loss,
    prepare_training_set,
    train,
)
from .numeric import TrainSchedule, bce_loss, lr_at_epoch, sgd_step
from .synthgen import SceneSpec, generate_scene

__version__ = "0.1.0"
