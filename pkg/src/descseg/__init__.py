"""Train segmentation predictors from a few global shape descriptors.

Instead of dense pixel labels, supervision comes from per-class geometric
summaries (volume, centroid, spread, boundary length, inter-class ratios)
held inside relaxed bounds by extended log-barrier penalties.
"""

__version__ = "0.1.0"

from .constraints import (
    BarrierParams,
    BoundEntry,
    ConstraintSpec,
    RatioEntry,
    bounds_from_target,
    ext_barrier,
    ext_barrier_grad,
    load_spec,
    save_spec,
    shared_centroid_prior,
    total_loss,
)
from .descriptors import (
    Connectivity,
    DescriptorSet,
    LaplacianCache,
    build_laplacian,
    central_moment,
    centroid,
    describe,
    length,
    ratio,
    shape_moment,
    spread,
    volume,
)
from .errors import DegenerateClassError, FormatError, NumericalError, SpecError
from .evaluate import EvalReport, dice, report
from .gradients import GradField, descriptor_vjp, loss_grad
from .grid import (
    GridShape,
    LabelMask,
    LogitField,
    ProbMap,
    argmax_labels,
    one_hot,
    softmax,
)
from .optimizer import AdamState, TrainConfig, TrainingReport, adam_step, train
from .phantom import PhantomKind, PhantomSpec, generate
from .predictors import CoordNet, FreeField, make_predictor
