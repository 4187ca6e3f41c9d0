"""botcensus: estimate the bot fraction of social-network communities by
training, calibrating, and combining feature-, text-, and graph-based
classifiers."""

__version__ = "0.1.0"

from .calibration import apply_temperature, expected_calibration_error, fit_temperature
from .config import PipelineConfig, load_config
from .ensemble import (
    CommunityEstimate,
    EnsembleBundle,
    classify_user,
    estimate_community,
    fit_weights,
    load_bundle,
    save_bundle,
)
from .features import (
    FEATURE_NAMES,
    FeatureStats,
    compute_features,
    fit_normalizer,
    levenshtein,
    normalize,
    string_entropy,
    unicode_group,
)
from .graph import (
    GnnModel,
    HeteroGraph,
    build_graph,
    distill_student,
    distillation_loss,
    gnn_forward,
    predict_student,
    train_gnn,
)
from .ingest import (
    EdgeList,
    UserRecord,
    UserStore,
    apply_verified_perturbation,
    load_edges,
    load_labels,
    load_users,
    merge_datasets,
    parse_user_record,
    split_train_val,
)
from .pipeline import TrainResult, train_bundle
from .report import EvalReport, individual_metrics, run_sweep, write_report
from .synth import SynthConfig, generate_community, resample_by_proximity
from .tabular import predict_tabular, train_adaboost, train_forest
from .text import (
    HashingEmbedder,
    LinearHead,
    encode_user,
    get_provider,
    predict_text,
    register_provider,
    train_text_head,
)

__all__ = [name for name in dir() if not name.startswith("_")]
