"""Link-level simulator of an adaptive neural OFDM receiver.

The package covers the full chain: a stochastic time-varying multipath
channel (`channel`), the OFDM frame and 16-QAM mapping (`link`), LDPC
coding with frame interleaving (`fec`, `framing`), classical iterative
receivers (`baseline`), a trainable recurrent receiver with its optimizer
(`rnn`), decision-directed on-the-fly retraining (`adapt`), and a
reproducible scenario harness with a CLI (`simulate`, `harness`, `cli`).
"""

from .adapt import (AcceptancePolicy, AdaptationReport, LabeledBatch,
                    RetrainBuffer, collect_and_retrain, collection_time_s,
                    recover_labels, retrain_step)
from .baseline import (CorrelationModel, app_demap, genie_correlation,
                       iedd_receive, lmmse_estimate, perfect_knowledge_idd,
                       soft_symbols)
from .channel import (ChannelParams, ChannelRealization, compute_pdp_weights,
                      doppler_frequency, pdp_frequency_correlation,
                      sample_channel_matrix)
from .fec import DecodeResult, Interleaver, LdpcCode
from .framing import FrameCodec, default_codec
from .harness import (AdaptSettings, BerRecord, SCENARIO_PRESETS,
                      ScenarioConfig, adapt_at_point, ber_confidence,
                      receive_frames, run_scenario, scenario_preset)
from .link import (FrameGeometry, FrameGrid, PilotPattern,
                   build_pilot_pattern, apply_channel, ebn0_to_sigma,
                   hard_demap_frame, ls_estimate_at_pilots,
                   map_bits_to_frame, qam16_bit_table, qam16_constellation)
from .rnn import (AdamState, RnnReceiver, TrainConfig, TrainSchedule,
                  assemble_input, bce_loss, extract_data_llrs, initial_train,
                  load_checkpoint, save_checkpoint, train_step)
from .simulate import (FrameBatch, InterferenceSpec, apply_interference,
                       count_info_errors, generate_frames)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
