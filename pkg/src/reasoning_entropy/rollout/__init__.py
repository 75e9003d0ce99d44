from .backends import (Backend, BackendError, BackendUnavailable, DecodingParams, HttpCompletionsBackend,
                       RetryPolicy, RolloutRequest, RolloutResponse, SyntheticBackend)
from .engine import (CheckpointEstimate, CheckpointPlan, CollectionError, EntropyTrajectory, derive_seed,
                     estimate_conditional_entropy, evaluate_question, evaluate_trace, generate_trace,
                     generate_trajectories, plan_checkpoints, shuffle_prefix)
