from .config import BIDIRECTIONAL, SUBLAYERS, VARIANTS, ConfigError, EncoderConfig
from .layers import CausalSelfAttention, FeedForward, LayerNorm, Linear, Module, causal_mask
from .network import (
    EncoderBlock,
    QNetwork,
    causal_mhsa,
    embed_history,
    encoder_block,
    ffn_sublayer,
    q_forward,
    recurrent_sublayer,
    select_action,
    sync_parameters,
)
from .params import ALIGNED_ROWS, COLUMNS, PUBLISHED_COUNTS, ParameterCount, aligned_config, parameter_count
from .recurrent import (
    CellWeights,
    RecurrentSublayer,
    gru_cell,
    lstm_cell,
    reference_recurrence,
    rnn_cell,
    scan,
    scan_directions,
)
