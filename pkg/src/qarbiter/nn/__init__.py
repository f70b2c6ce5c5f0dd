from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .gradcheck import (finite_diff_check, finite_diff_check_embedder,
                        finite_diff_check_recurrent, max_relative_gradient_error)
from .layers import LSTM, Conv2d, Dense, Flatten, ReLU
from .networks import (OBS_SCALE, KnowledgeEmbedderNet, QNetwork, RecurrentQNetwork,
                       build_network, clone_network, default_conv_spec, encode_obs,
                       same_architecture)
from .optim import AdamState, Optimizer, adam_step, soft_update, soft_update_params
from .qlearning import (greedy_action, k_td_loss_and_grads, k_td_targets, q_forward,
                        rq_forward, sequence_td_loss_and_grads, sequence_td_targets,
                        td_loss_and_grads, td_targets)
