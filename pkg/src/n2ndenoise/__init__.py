"""Speech denoising with complex-spectrogram masking trained on noisy targets."""

__version__ = "0.1.0"

from .audio_io import (
    FormatError,
    UnsupportedError,
    Waveform,
    read_wav,
    resample_linear,
    write_wav,
)
from .checkpoint import load_tensors, save_tensors
from .cxnn import (
    ComplexBatchNorm,
    ComplexConvLayer,
    ComplexTensor,
    complex_batch_norm,
    complex_conv2d,
    complex_conv_transpose2d,
    init_complex_weights,
    lecrelu,
)
from .dcunet import (
    ArchitectureSpec,
    DCUnet,
    apply_mask,
    denoise,
    estimate_mask,
)
from .metrics import (
    MetricReport,
    MetricRow,
    evaluate_testset,
    snr_metric,
    ssnr_metric,
    stoi_metric,
)
from .mixgen import (
    DatasetManifest,
    NoiseBank,
    TrainingPair,
    compute_snr_db,
    generate_dataset,
    make_pair,
    scale_noise_to_snr,
    synthetic_speech,
)
from .objective import (
    l1_loss,
    l1_minimizer_experiment,
    l2_loss,
    n2n_equivalence_experiment,
    wsdr_loss,
    wsdr_loss_tensor,
)
from .spectral import (
    ComplexSpectrogram,
    StftConfig,
    hop_from_ms,
    istft,
    istft_tensor,
    spectrogram_energy,
    stft,
    stft_tensor,
)
from .trainer import (
    AdamState,
    TrainConfig,
    TrainState,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    train,
)
