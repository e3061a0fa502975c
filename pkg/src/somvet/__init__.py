"""somvet: real-bogus vetting of difference-image detections with an
autoencoder + self-organizing map, plus the synthetic data, evaluation
protocol and serving surface around it."""

__version__ = "0.1.0"

from .nn import Batch, LayerSpec, Network, fit_autoencoder, gradient_check
from .som import DecaySchedule, SomMap, best_matching_unit, decay_value, fit_som, quantization_error, som_train_step
from .model import DesomModel, assign_cell, decode_prototypes, load_model, save_model, total_loss, train_combined, train_separate
from .stamps import Detection, ImageFrame, OffsetFit, Stamp, build_stamp_set, crossmatch_radius, cutout_stamp, detect_sources, fit_offset_threshold, normalize_stamp
from .synth import FieldConfig, StampSetConfig, synth_field, synth_stamp_set
from .evaluate import PvSelection, RocCurve, classify_stamp, confusion_rates, figure_of_merit, order_cells_by_percentile, ratio_map, roc_switch_off, train_reference_scorer
