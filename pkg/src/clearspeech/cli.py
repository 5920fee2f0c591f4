"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/processing error.  Diagnostics go
to stderr; data goes to files or stdout.  The default seed comes from
CLEARSPEECH_SEED when set.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import evalkit
from ._util import atomic_write_bytes, atomic_write_text
from .audio import (
    NoiseSpec,
    Waveform,
    build_corpus,
    gen_white_noise,
    load_corpus,
    mix_at_snr,
    read_wav,
    synth_word,
    write_wav,
)
from .enhance import EnhanceConfig, HybridContext, StftParams, run_hybrid
from .features import FrameParams, extract_features
from .filterbank import (
    AdaptiveParams,
    FirSpec,
    apply_fir,
    design_fir,
    erle_db,
    lms_cancel,
    nlms_cancel,
)
from .fis import evaluate, parse_fis, speech_accuracy_fis
from .recognizer import (
    init_uniform,
    load_model,
    recognize,
    save_model,
    train,
    word_accuracy,
)
from .vad import VadParams, detect_endpoints, label_frames

DEFAULT_SEED = 12345


def _env_seed() -> int:
    raw = os.environ.get("CLEARSPEECH_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"CLEARSPEECH_SEED={raw!r} is not an integer") from None


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; data problems exit 2 (handled in main)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _frame_params(args) -> FrameParams:
    return FrameParams(
        window_len=args.window, overlap_pct=args.overlap, fft_size=args.fft_size
    )


def _add_frame_flags(parser, window=245, overlap=45.0, fft=512):
    parser.add_argument("--window", type=int, default=window, help="window length, samples")
    parser.add_argument("--overlap", type=float, default=overlap, help="overlap percent")
    parser.add_argument("--fft-size", type=int, default=fft)


def _stft_params(args) -> StftParams:
    return StftParams(
        frame_len=args.frame_len,
        hop=args.hop,
        fft_size=args.stft_fft,
        window=args.stft_window,
    )


def _add_stft_flags(parser):
    parser.add_argument("--frame-len", type=int, default=256)
    parser.add_argument("--hop", type=int, default=128)
    parser.add_argument("--stft-fft", type=int, default=256)
    parser.add_argument("--stft-window", default="hamming", choices=["hamming", "hann", "rect"])


def _enhance_config(args, variant: str) -> EnhanceConfig:
    return EnhanceConfig(
        variant=variant,
        alpha=args.alpha,
        beta=args.beta,
        dd_alpha=args.dd_alpha,
        bands=args.bands,
        ar_order=args.ar_order,
        iterations=args.iterations,
    )


def _add_enhance_flags(parser):
    parser.add_argument("--alpha", type=float, default=None,
                        help="fixed over-subtraction factor (default: SNR ramp)")
    parser.add_argument("--beta", type=float, default=0.002)
    parser.add_argument("--dd-alpha", type=float, default=0.98)
    parser.add_argument("--bands", type=int, default=4)
    parser.add_argument("--ar-order", type=int, default=10)
    parser.add_argument("--iterations", type=int, default=3)
    parser.add_argument("--noise-frames", type=int, default=10)


def build_parser() -> _Parser:
    parser = _Parser(prog="clearspeech", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic digit corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--utterances", type=int, default=1)
    p.add_argument("--sample-rate", type=int, default=8000)

    p = sub.add_parser("vad", help="endpoints and per-frame labels")
    p.add_argument("input")
    p.add_argument("--frame-ms", type=float, default=10.0)
    p.add_argument("--out", help="CSV destination (default stdout)")

    p = sub.add_parser("filter", help="design and apply an FIR filter")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--kind", required=True,
                   choices=["lowpass", "highpass", "bandpass", "bandstop"])
    p.add_argument("--edges", required=True, help="cutoffs in Hz, comma separated")
    p.add_argument("--taps", type=int, default=101)

    p = sub.add_parser("anc", help="adaptive noise cancellation")
    p.add_argument("primary")
    p.add_argument("reference")
    p.add_argument("output")
    p.add_argument("--algo", default="nlms", choices=["lms", "nlms"])
    p.add_argument("--order", type=int, default=8)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--eps", type=float, default=1e-8)

    p = sub.add_parser("enhance", help="single-stage enhancement")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--variant", default="logmmse",
                   choices=["boll", "berouti", "sim", "kamath",
                            "wiener", "mmse", "logmmse", "omlsa", "kalman"])
    _add_enhance_flags(p)
    _add_stft_flags(p)

    p = sub.add_parser("hybrid", help="chain enhancement stages")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--stages", required=True,
                   help="comma-separated stage list, e.g. nlms,logmmse")
    p.add_argument("--reference", help="noise reference WAV for lms/nlms stages")
    p.add_argument("--order", type=int, default=8)
    p.add_argument("--mu", type=float, default=0.5)
    _add_enhance_flags(p)
    _add_stft_flags(p)

    p = sub.add_parser("mfcc", help="feature matrix as CSV")
    p.add_argument("input")
    p.add_argument("--out", help="CSV destination (default stdout)")
    _add_frame_flags(p)

    p = sub.add_parser("train", help="train one HMM per word from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=20)
    _add_frame_flags(p)

    p = sub.add_parser("recognize", help="classify utterances against trained models")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--manifest")
    p.add_argument("inputs", nargs="*", help="WAV files when no manifest given")
    _add_frame_flags(p)

    p = sub.add_parser("eval-snr", help="SNR improvement table over methods")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--snr-levels", default="0",
                   help="comma-separated target SNRs in dB")
    p.add_argument("--methods", default="boll,berouti,kamath,wiener,mmse,logmmse")
    p.add_argument("--words", type=int, default=3, help="clean tokens to average over")
    p.add_argument("--noise-mode", default="leading", choices=["leading", "oracle"])
    p.add_argument("--noise-frames", type=int, default=10)

    p = sub.add_parser("eval-grid", help="accuracy over a window/overlap grid")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--windows", default="240,245,250")
    p.add_argument("--overlaps", default="20,45")
    p.add_argument("--train-per-word", type=int, default=3)
    p.add_argument("--test-per-word", type=int, default=2)
    p.add_argument("--reused-per-word", type=int, default=1,
                   help="training tokens repeated in the test list")
    p.add_argument("--labels", default="0,1,2")
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--noise-snr", type=float, default=None,
                   help="mix white noise at this SNR before testing")
    p.add_argument("--enhance", default=None,
                   help="comma-separated stages applied to test material")

    p = sub.add_parser("fis-eval", help="evaluate a fuzzy system at crisp inputs")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--fis", help="config file path")
    group.add_argument("--builtin", default="speech-accuracy",
                       choices=["speech-accuracy"])
    p.add_argument("--inputs", required=True, help="comma-separated crisp inputs")

    p = sub.add_parser("spectrogram", help="PGM spectrogram with axis sidecar")
    p.add_argument("input")
    p.add_argument("output")
    _add_stft_flags(p)

    return parser


def _cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    manifest = build_corpus(
        args.out,
        seed,
        speakers=args.speakers,
        utterances=args.utterances,
        sample_rate=args.sample_rate,
    )
    print(str(Path(args.out) / "manifest.tsv"))
    print(f"wrote {len(manifest.entries)} utterances", file=sys.stderr)
    return 0


def _cmd_vad(args) -> int:
    wave = read_wav(args.input)
    params = VadParams(frame_ms=args.frame_ms)
    begin, end = detect_endpoints(wave, params)
    rate = wave.sample_rate
    print(
        f"begin={begin} end={end} "
        f"begin_s={begin / rate:.4f} end_s={end / rate:.4f}"
    )
    rows = [["frame_index", "energy", "zcr", "label"]]
    for i, (energy, zcr, label) in enumerate(label_frames(wave, params)):
        rows.append([str(i), f"{energy:.6e}", f"{zcr:.4f}", label.value])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _cmd_filter(args) -> int:
    wave = read_wav(args.input)
    spec = FirSpec(
        kind=args.kind,
        edges_hz=tuple(_float_list(args.edges)),
        num_taps=args.taps,
        sample_rate=wave.sample_rate,
    )
    write_wav(apply_fir(wave, design_fir(spec)), args.output)
    return 0


def _cmd_anc(args) -> int:
    primary = read_wav(args.primary)
    reference = read_wav(args.reference)
    mu = args.mu if args.mu is not None else (0.5 if args.algo == "nlms" else 0.01)
    params = AdaptiveParams(order=args.order, mu=mu, eps=args.eps)
    cancel = nlms_cancel if args.algo == "nlms" else lms_cancel
    residual, _ = cancel(primary, reference, params)
    write_wav(residual, args.output)
    print(f"erle_db={erle_db(primary, residual):.4f}", file=sys.stderr)
    return 0


def _cmd_enhance(args) -> int:
    wave = read_wav(args.input)
    ctx = HybridContext(
        noise_frames=args.noise_frames,
        stft_params=_stft_params(args),
        config=_enhance_config(args, args.variant),
    )
    write_wav(run_hybrid(wave, [args.variant], ctx), args.output)
    return 0


def _cmd_hybrid(args) -> int:
    wave = read_wav(args.input)
    stages = [s for s in args.stages.split(",") if s.strip()]
    ctx = HybridContext(
        reference=read_wav(args.reference) if args.reference else None,
        noise_frames=args.noise_frames,
        stft_params=_stft_params(args),
        adaptive=AdaptiveParams(order=args.order, mu=args.mu),
        config=_enhance_config(args, "logmmse"),
    )
    write_wav(run_hybrid(wave, stages, ctx), args.output)
    return 0


def _cmd_mfcc(args) -> int:
    wave = read_wav(args.input)
    matrix = extract_features(wave, _frame_params(args))
    rows = [[f"{v:.8e}" for v in row] for row in matrix]
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _collect_features(manifest_path, params):
    manifest, waves = load_corpus(manifest_path)
    grouped: dict[int, list[np.ndarray]] = {}
    for entry, wave in zip(manifest.entries, waves):
        grouped.setdefault(entry.label, []).append(extract_features(wave, params))
    return manifest, grouped


def _cmd_train(args) -> int:
    params = _frame_params(args)
    _, grouped = _collect_features(args.manifest, params)
    model_dir = Path(args.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    for label, feats in sorted(grouped.items()):
        model = train(
            init_uniform(label, feats, args.states),
            feats,
            max_iters=args.max_iters,
        )
        save_model(model, model_dir / f"word{label}.hmm")
        print(f"word {label}: trained on {len(feats)} tokens", file=sys.stderr)
    return 0


def _load_models(model_dir):
    paths = sorted(Path(model_dir).glob("*.hmm"))
    if not paths:
        raise ValueError(f"no .hmm models found under {model_dir}")
    return [load_model(p) for p in paths]


def _cmd_recognize(args) -> int:
    params = _frame_params(args)
    models = _load_models(args.model_dir)
    if args.manifest:
        manifest, waves = load_corpus(args.manifest)
        correct = 0
        for entry, wave in zip(manifest.entries, waves):
            predicted, _ = recognize(models, extract_features(wave, params))
            correct += int(predicted == entry.label)
            print(f"{entry.path}\t{predicted}")
        acc = word_accuracy(correct, len(manifest.entries))
        print(f"accuracy={acc:.4f}", file=sys.stderr)
        return 0
    if not args.inputs:
        raise ValueError("recognize needs a manifest or explicit WAV inputs")
    for path in args.inputs:
        predicted, _ = recognize(models, extract_features(read_wav(path), params))
        print(f"{path}\t{predicted}")
    return 0


def _cmd_eval_snr(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    clean = [synth_word(d, seed * 100 + d) for d in range(args.words)]
    specs = [
        (f"white{int(level)}dB", NoiseSpec("white", level, seed + int(level) + 1))
        for level in _float_list(args.snr_levels)
    ]
    methods = [m for m in args.methods.split(",") if m.strip()]
    table = evalkit.snr_improvement_table(
        clean,
        specs,
        methods,
        noise_mode=args.noise_mode,
        noise_frames=args.noise_frames,
    )
    evalkit.write_report(table, args.out)
    print(args.out)
    return 0


def _cmd_eval_grid(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    labels = _int_list(args.labels)
    corpus = evalkit.default_grid_corpus(
        labels,
        seed,
        train_per_word=args.train_per_word,
        test_per_word=args.test_per_word,
        reused_per_word=args.reused_per_word,
    )
    if args.noise_snr is not None:
        noisy = {
            label: [
                mix_at_snr(
                    w,
                    gen_white_noise(len(w), seed + 7000 + label * 31 + i, w.sample_rate),
                    args.noise_snr,
                )
                for i, w in enumerate(waves)
            ]
            for label, waves in corpus.test.items()
        }
        corpus = evalkit.GridCorpus(
            train=corpus.train, test=noisy, clean_test=corpus.clean_test
        )
    stages = (
        [s for s in args.enhance.split(",") if s.strip()] if args.enhance else None
    )
    grid = evalkit.accuracy_grid(
        corpus,
        _int_list(args.windows),
        _float_list(args.overlaps),
        n_states=args.states,
        enhance_stages=stages,
    )
    evalkit.write_report(grid, args.out)
    print(args.out)
    return 0


def _cmd_fis_eval(args) -> int:
    config = parse_fis(Path(args.fis).read_text()) if args.fis else speech_accuracy_fis()
    values = _float_list(args.inputs)
    result = evaluate(config, values)
    for value in result.outputs:
        print(f"{value:.4f}")
    for i, strength in enumerate(result.firing_strengths, start=1):
        print(f"rule{i} strength={strength:.6f}", file=sys.stderr)
    if result.no_rule_fired:
        print("no rule fired; returned range midpoint", file=sys.stderr)
    return 0


def _cmd_spectrogram(args) -> int:
    wave = read_wav(args.input)
    evalkit.export_spectrogram(wave, args.output, _stft_params(args))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "vad": _cmd_vad,
    "filter": _cmd_filter,
    "anc": _cmd_anc,
    "enhance": _cmd_enhance,
    "hybrid": _cmd_hybrid,
    "mfcc": _cmd_mfcc,
    "train": _cmd_train,
    "recognize": _cmd_recognize,
    "eval-snr": _cmd_eval_snr,
    "eval-grid": _cmd_eval_grid,
    "fis-eval": _cmd_fis_eval,
    "spectrogram": _cmd_spectrogram,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"clearspeech {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
