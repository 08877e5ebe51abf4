"""Federated-learning simulator and analysis toolkit built around
position-aware neurons: hidden units that fuse a fixed sinusoidal encoding
into their outputs, turning the permutation invariance of an MLP on and off.
"""

from .alignment import (ActivationProfile, AssignmentResult, FusionCurve,
                        PreferenceMatrix, collect_activations, fusion_curve,
                        interpolate_models, match_neurons, preference_vectors)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (ClientDataset, Dataset, PartitionSpec, gen_synthetic, iter_batches,
                   label_distribution, load_idx, make_synthetic_split,
                   partition_dirichlet)
from .errors import ConfigError, FormatError, NumericsError, ShapeError
from .estimators import FederatedPanClassifier, PanMlpClassifier
from .federated import (FederationConfig, MetricsLog, RoundRecord, RoundState,
                        average_models, divergence_per_layer, evaluate, local_train,
                        run_experiment, run_round, train_centralized,
                        weight_divergence)
from .linalg import derive_rng, hadamard, make_rng, matmul, sample_gaussian, worker_rng
from .network import (Activations, Gradients, MlpModel, PanConfig, PanMode,
                      SgdOptimizer, backward, forward, gen_encoding, init_mlp,
                      jacobian_wrt_encoding, predict_logits, softmax_cross_entropy)
from .permutation import (PermutationPlan, ShuffleReport, ShuffleSchedule,
                          compose_plans, first_order_shuffle_error, gen_permutation,
                          gen_plan, identity_plan, invert_plan, perm_matrix, r_kept,
                          shuffle_error, shuffle_injection_schedule, shuffle_model,
                          shuffle_report, simulate_schedule_r_kept)

__version__ = "0.1.0"
