"""Context-aware trust assessment.

Advisors encapsulate their interaction histories as small classifiers and
share only the model parameters; an advisee aggregates those shared
opinions, together with its own evidence, through an entropy-gated sparse
network to score how trustworthy a target is in a given context.
"""

from .backend import backend_name
from .baselines import FeedbackTally, brs_score, tmsiot_score
from .bnn import (
    BnnNetwork,
    BnnTopology,
    TrainHyperparams,
    build_dense_topology,
    build_topology,
    compute_widths,
    forward,
    forward_batch,
    init_network,
    load_network,
    save_network,
    train,
)
from .core import (
    AgentId,
    ContextVector,
    EvidenceRecord,
    EvidenceStore,
    average_entropy,
    bernoulli_entropy,
    read_evidence,
    write_evidence,
)
from .encap import (
    KindPolicy,
    ModelRepository,
    build_repository,
    deserialize_model,
    flip_model,
    load_repository,
    save_repository,
    serialize_model,
    train_decision_tree,
    train_gaussian_nb,
)
from .assembly import (
    TrainingSet,
    advisor_opinion,
    init_training_data,
    load_training_set,
    save_training_set,
    update_horizontal,
    update_vertical,
)
from .evaluate import CompareInputs, accuracy, compare, kfold, rmse
from .ingest import label_sla, parse_records, to_evidence
from .sim import (
    SimConfig,
    TargetProfile,
    World,
    apply_attack,
    gen_world,
    run_grid,
    target_violation_prob,
)

__version__ = "0.1.0"
