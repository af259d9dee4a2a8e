"""Iterative multiuser detection for time-hopping impulse-radio UWB."""

from .channel import (ChannelRealization, ClusterRayParams, generate_cir, load_cir,
                      flat_channel, preset)
from .detectors import (CapacityError, DetectorConfig, LlrState,
                        mrc_rake_decide, prior_prob, pulse_llr_exact, pulse_llr_gaussian_lc,
                        pulse_llr_sic, run_iterative, symbol_update)
from .frontend import (CollisionDescriptor, Collisions, SamplingPlan, build_collisions,
                       default_plan, mrc_combine, path_samples, sample_index, strongest_plan)
from .model import (CodeBook, ConfigurationError, SymbolMatrix, SystemConfig, generate_bits,
                    generate_codes, make_rng, synthesize_noiseless, synthesize_received)

__version__ = "0.1.0"
