"""Speech enhancement, isolated-word recognition and fuzzy parameter tuning."""

from .audio import (
    CorpusEntry,
    CorpusManifest,
    NoiseSpec,
    Waveform,
    gen_white_noise,
    mix_at_snr,
    read_wav,
    snr_db,
    synth_word,
    write_wav,
)
from .enhance import (
    EnhanceConfig,
    HybridContext,
    NoisePsd,
    SpectralFrames,
    StftParams,
    estimate_noise,
    istft,
    kalman_enhance,
    run_hybrid,
    spectral_subtract,
    statistical_enhance,
    stft,
)
from .estimators import (
    CepstralMeanNormalizer,
    HmmWordRecognizer,
    MfccExtractor,
    SpectralEnhancer,
    VoicedTrimmer,
)
from .features import FrameParams, extract_features, mfcc_frames, to_feature_matrix
from .filterbank import (
    AdaptiveParams,
    FirSpec,
    apply_fir,
    cmn,
    design_fir,
    erle_db,
    lms_cancel,
    nlms_cancel,
    rasta_filter,
)
from .fis import FisConfig, evaluate, parse_fis, serialize_fis, speech_accuracy_fis
from .recognizer import (
    HmmModel,
    init_uniform,
    load_model,
    recognize,
    save_model,
    train,
    viterbi,
    word_accuracy,
)
from .vad import VadParams, VusLabel, classify_vus, detect_endpoints, trim_to_voiced

__version__ = "0.1.0"
