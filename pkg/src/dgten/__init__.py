"""Uncertainty-aware dynamic trust evaluation on signed trust graphs."""

__version__ = "0.1.0"

from .adversarial import AttackKind, AttackSpec, bad_mouthing, good_mouthing, on_off, run_attack
from .graphs import (
    InteractionRecord,
    NodeClass,
    Snapshot,
    SnapshotSequence,
    TrustLabel,
    discretize,
    edge_homophily,
    load_edge_list,
    load_sequence,
    node_classes,
    save_sequence,
)
from .metrics import (
    ConfusionCounts,
    auc,
    average_precision,
    balanced_accuracy,
    f1_macro,
    f1_micro,
    mcc,
)
from .model import TrustModel
from .numerics import ParamRegistry, chebyshev_basis, grad_check, rk4_integrate
from .structural import (
    DefensiveCoefficients,
    EdgeOpinion,
    GaussianEmbedding,
    aggregate,
    conv_update,
    edge_gaussian,
    init_node_gaussian,
    raeca,
    structural_forward,
)
from .temporal import (
    AttentionParams,
    HaghParams,
    KanLayer,
    OdeParams,
    causal_attention,
    hagh_encode,
    kan_apply,
    ode_refine,
    temporal_forward,
)
from .training import (
    EdgeInstance,
    EvalReport,
    TrainConfig,
    class_weights,
    evaluate,
    loss,
    round_t_ends,
    train,
)
from .uncertainty import FingerprintTable, cluster_fingerprints, fingerprints, watchlist
