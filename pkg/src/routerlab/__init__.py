"""Model-routing workbench.

Builds aligned quality/cost matrices from inference logs, trains query
routers against cost-tilted soft targets, evaluates them on a
multi-objective protocol, and fits accuracy-cost Pareto frontiers.
"""

from .baselines import Decision, cheapest_model, oracle_decision, oracle_decisions, strongest_model
from .fusion import FUSION_METHODS, FusionSpec, fuse, make_fusion
from .log_store import (
    BenchStore,
    EmbeddingTable,
    PriceEntry,
    RecordLog,
    Sample,
    SplitAssignment,
    compute_cost,
    ingest,
    load_embeddings,
    make_split,
    read_jsonl,
    read_prices,
    write_embeddings,
    write_jsonl,
    write_prices,
)
from .metrics import (
    EvalReport,
    build_report,
    cost_norm,
    cost_range,
    evaluate,
    leaderboard_rows,
    rank_score,
    throughput,
)
from .pareto import FrontierFit, eval_frontier, fit_frontier, pareto_set
from .routers import (
    ALL_KINDS,
    RouterModel,
    TrainConfig,
    load_checkpoint,
    predict,
    route,
    save_checkpoint,
    train_gradient_router,
    train_kmeans,
    train_knn,
    train_ovr,
    train_prknn,
)
from .soft_label import SoftTarget, build_targets, expected_cost, soft_loss, soft_target, verify_optimality
from .synth import SynthConfig, SynthResult, expected_oracle_accuracy, generate

__version__ = "0.1.0"
