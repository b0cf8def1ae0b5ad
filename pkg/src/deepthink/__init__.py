"""Two-stage in-context learning.

Stage one iterates forward passes over the demonstrations, accumulating
their Key-Value matrices with a momentum update; stage two answers test
queries alone against the stored state. See deep_think, evaluate, and the
`deepthink` command-line entry point.
"""

from .errors import (
    CapacityError,
    CompatibilityError,
    ConfigError,
    CorruptionError,
    DataError,
    DivergenceError,
    EngineError,
    FormatError,
    InputError,
    ParseError,
    ShapeError,
    StateError,
    StorageError,
)
from .kernels import gelu, layer_norm, matmul, softmax_rows
from .kvstore import load_kv, save_kv
from .model import (
    DualFormResult,
    KVState,
    LayerKV,
    LayerWeights,
    ModelConfig,
    ModelWeights,
    attend_with_prefix,
    block_forward,
    dual_form_decompose,
    forward_hidden,
    model_forward,
    project_qkv,
)
from .modelio import load_model, model_fingerprint, save_model
from .tasks import (
    BUILTIN_TASKS,
    EvalConfig,
    EvalReport,
    PromptSpec,
    TaskExample,
    evaluate,
    get_task,
    load_dataset,
    predict,
    render_candidate,
    render_demos,
    score_candidate,
)
from .thinking import (
    GradTrace,
    MomentumState,
    ThinkConfig,
    ThinkResult,
    deep_think,
    kv_update,
    momentum_update,
    pseudo_gradient,
    think_step,
)
from .tokenizer import Tokenizer, bytes_to_unicode, pretokenize

__version__ = "0.1.0"
