"""Two-branch hand-sign classifier: a from-scratch numpy training stack
fusing CNN visual features with hand-keypoint features, plus the synthetic
harness that demonstrates when fusion beats pixels alone."""

from .tensor import (
    F32,
    F64,
    GradTape,
    GraphError,
    ShapeError,
    SizeError,
    Tensor,
    TensorError,
    add,
    concat,
    mul,
    reshape,
    split,
    sum_all,
    tensor_create,
)
from .layers import (
    BatchNorm,
    Conv2d,
    DegenerateBatchError,
    Dense,
    LabelError,
    activation,
    maxpool2x2,
    softmax_xent,
)
from .data import (
    ConfigError,
    DatasetError,
    DatasetManifest,
    DecodeError,
    FormatError,
    Item,
    Sample,
    SchemaError,
    epoch_permutation,
    load_dataset_arrays,
    load_image,
    load_keypoints,
    load_sample,
    read_archive,
    scan_dataset,
    split_train_val,
    write_archive,
)
from .synth import HAND_BONES, SynthConfig, generate_synthetic, render_skeleton
from .model import (
    InputError,
    ModelConfig,
    Network,
    build_concatenated,
    build_image_only,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)
from .train import (
    DivergenceError,
    EvalReport,
    HistoryRow,
    OptimizerError,
    TrainConfig,
    TrainState,
    adam_step,
    comparison_table,
    early_stop_check,
    evaluate,
    fit,
    plateau_update,
    write_history_csv,
    write_report,
)
from .gradcheck import max_rel_error, numeric_gradient, run_suite

__version__ = "0.1.0"
