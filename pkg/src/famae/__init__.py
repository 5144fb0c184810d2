"""famae: frequency-aware masked autoencoding for multimodal time series.

The token mixer is a fixed-size learnable frequency filter bank applied in
the DFT domain, so one trained model handles inputs of any length, sampling
rate, channel count and channel order. Pretraining is masked autoencoding in
latent space: the encoder always sees full sequences, masking happens on
tokens. Fine-tuning and evaluation run behind sklearn-style estimators.
"""

from .classification import SignalClassifier, pooled_features
from .data import (
    ChannelSpec,
    DatasetBundle,
    SynthConfig,
    load_dataset,
    save_dataset,
    standardize,
    synth_generate,
)
from .encoder import FAEncoder, patchify
from .filters import (
    FrequencyFilterBank,
    apply_maxpool_filter,
    apply_query_filter,
    freq_layer_forward,
)
from .fourier import backward, dft, idft, irdft, rdft
from .harness import (
    count_flops,
    count_params,
    evaluate,
    export_attention,
    finetune,
    modality_dropout,
    modality_substitution,
)
from .mae import MaskSpec, MaskedAutoencoder, mae_forward, mae_loss, sample_mask
from .metrics import Metrics, evaluate_predictions
from .pretraining import MaskedAutoencoderPretrainer
from .seeding import Streams, substream

__version__ = "0.1.0"

__all__ = [
    "SignalClassifier",
    "pooled_features",
    "ChannelSpec",
    "DatasetBundle",
    "SynthConfig",
    "load_dataset",
    "save_dataset",
    "standardize",
    "synth_generate",
    "FAEncoder",
    "patchify",
    "FrequencyFilterBank",
    "apply_maxpool_filter",
    "apply_query_filter",
    "freq_layer_forward",
    "backward",
    "dft",
    "idft",
    "irdft",
    "rdft",
    "count_flops",
    "count_params",
    "evaluate",
    "export_attention",
    "finetune",
    "modality_dropout",
    "modality_substitution",
    "MaskSpec",
    "MaskedAutoencoder",
    "mae_forward",
    "mae_loss",
    "sample_mask",
    "Metrics",
    "evaluate_predictions",
    "MaskedAutoencoderPretrainer",
    "Streams",
    "substream",
    "__version__",
]
