"""Command line interface: simulate, map, train, eval, inspect.

Exit codes: 0 success, 1 usage error, 2 data error (missing/corrupt files,
invalid values), 3 numerical failure (non-finite loss, singular solve).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .acoustic_map import (
    BandConfig,
    band_argmax,
    compute_acoustic_map,
    default_bands,
    load_map,
    render_map,
    save_map,
)
from .audio import read_wav, write_wav
from .beamforming import beamformer_from_name
from .errors import FileFormatError, NumericsError
from .evaluation import EvalConfig, evaluate, extract_maps, load_manifest, write_report
from .geometry import Direction, resolve_geometry
from .nn.checkpoint import preprocessing_metadata, save_checkpoint
from .nn.train import TrainConfig, train
from .simulate import BandNoise, PlaneWaveSpec, SpeechLike, Tone, simulate_plane_wave
from .stft import StftConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(message)


def parse_signal(text: str):
    kind, _, rest = text.partition(":")
    try:
        if kind == "tone":
            return Tone(float(rest))
        if kind == "noise":
            low, high = rest.split(":")
            return BandNoise(float(low), float(high))
        if kind == "speech":
            return SpeechLike(float(rest)) if rest else SpeechLike()
    except ValueError as exc:
        raise UsageError(f"bad signal spec {text!r}: {exc}") from exc
    raise UsageError(f"unknown signal {text!r}; use tone:F, noise:LOW:HIGH, or speech[:F0]")


def parse_bands(text: str | None) -> BandConfig | None:
    if text is None:
        return None
    edges = []
    for part in text.split(","):
        low, _, high = part.partition(":")
        try:
            edges.append((float(low), float(high)))
        except ValueError as exc:
            raise UsageError(f"bad band spec {part!r}; use LOW:HIGH[,LOW:HIGH...]") from exc
    return BandConfig(edges_hz=tuple(edges))


def _add_geometry_args(p):
    p.add_argument("--geometry", required=True,
                   help="builtin id (linear-2, linear-4, hex-6, hex-7) or geometry JSON path")
    p.add_argument("--spacing", type=float, default=0.05,
                   help="builtin spacing/circumradius in meters (default 0.05)")


def _add_stft_args(p):
    p.add_argument("--n-fft", type=int, default=1024)
    p.add_argument("--hop", type=int, default=512)
    p.add_argument("--window", choices=("hann", "rectangular"), default="hann")


def _add_beamformer_args(p):
    p.add_argument("--beamformer", choices=("das", "mvdr", "srp-phat"), default="das")
    p.add_argument("--diag-load", type=float, default=1e-3, help="MVDR relative diagonal loading")
    p.add_argument("--phat-eps", type=float, default=None,
                   help="SRP-PHAT epsilon (default: 1e-8 x per-frame peak magnitude)")
    p.add_argument("--bands", default=None,
                   help="band edges LOW:HIGH[,LOW:HIGH...] in Hz (default: standard four bands)")
    p.add_argument("--no-normalize", action="store_true", help="skip per-band peak normalization")
    p.add_argument("--log-compress", action="store_true", help="log1p-compress map energies")


def _add_train_args(p):
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--mixup-alpha", type=float, default=0.05)


def _add_global_args(p, suppress: bool = False):
    # registered on the root parser with real defaults and on every
    # subcommand with SUPPRESS, so the flags work in either position
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0)
    p.add_argument("--threads", type=int,
                   default=argparse.SUPPRESS if suppress else None,
                   help="worker pool size (default: available cores; 1 = serial)")
    p.add_argument("--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)


def build_parser() -> _Parser:
    parser = _Parser(prog="replaymap",
                     description="Acoustic-map replay speech detection pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_args(parser)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render a plane wave onto an array and write a WAV")
    _add_geometry_args(p)
    p.add_argument("--az", type=float, required=True)
    p.add_argument("--el", type=float, default=0.0)
    p.add_argument("--signal", default="tone:1000", help="tone:F | noise:LOW:HIGH | speech[:F0]")
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--sample-rate", type=int, default=44100)
    p.add_argument("--snr", type=float, default=None, help="white noise SNR in dB (default: none)")
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--format", choices=("int16", "int32", "float32"), default="float32")
    p.add_argument("--out", required=True)
    _add_global_args(p, suppress=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("map", help="compute an acoustic map from a multi-channel WAV")
    p.add_argument("--input", required=True)
    _add_geometry_args(p)
    _add_stft_args(p)
    _add_beamformer_args(p)
    p.add_argument("--out", required=True, help="output .amap path")
    p.add_argument("--png", default=None, help="also render one band to this image path")
    p.add_argument("--png-band", type=int, default=0)
    _add_global_args(p, suppress=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("train", help="train the classifier on a manifest's train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--device", default=None, choices=("D1", "D2", "D3", "D4"))
    p.add_argument("--wav-root", default=None, help="directory manifest paths are relative to")
    _add_geometry_args(p)
    _add_stft_args(p)
    _add_beamformer_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="output checkpoint path")
    _add_global_args(p, suppress=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the train/test protocol and report EERs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--device", default=None, choices=("D1", "D2", "D3", "D4"))
    p.add_argument("--wav-root", default=None)
    p.add_argument("--mode", choices=("env-dependent", "env-independent"), default="env-dependent")
    p.add_argument("--holdout", default=None, help="held-out environment for env-independent mode")
    p.add_argument("--runs", type=int, default=5)
    _add_geometry_args(p)
    _add_stft_args(p)
    _add_beamformer_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="output JSON report path")
    _add_global_args(p, suppress=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="summarize an acoustic map file")
    p.add_argument("map_path")
    p.add_argument("--json", action="store_true")
    _add_global_args(p, suppress=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def _threads(args) -> int:
    return max(1, args.threads) if args.threads is not None else (os.cpu_count() or 1)


def cmd_simulate(args) -> int:
    geometry = resolve_geometry(args.geometry, args.spacing)
    spec = PlaneWaveSpec(
        direction=Direction(args.az, args.el),
        signal=parse_signal(args.signal),
        amplitude=args.amplitude,
        snr_db=args.snr,
        duration_s=args.duration,
        sample_rate=args.sample_rate,
    )
    seg = simulate_plane_wave(geometry, spec, rng=args.seed)
    write_wav(args.out, seg, sample_format=args.format)
    if args.verbose:
        print(f"wrote {seg.channel_count}x{seg.n_samples} samples to {args.out}")
    return 0


def cmd_map(args) -> int:
    geometry = resolve_geometry(args.geometry, args.spacing)
    seg = read_wav(args.input)
    acoustic = compute_acoustic_map(
        seg,
        geometry,
        stft_config=StftConfig(n_fft=args.n_fft, hop=args.hop, window=args.window),
        kind=beamformer_from_name(args.beamformer, args.diag_load, args.phat_eps),
        bands=parse_bands(args.bands),
        normalize_map=not args.no_normalize,
        log_compress_map=args.log_compress,
        threads=_threads(args),
    )
    save_map(acoustic, args.out)
    if args.png:
        render_map(acoustic, args.png_band, args.png)
    if args.verbose:
        print(f"wrote {acoustic.band_count}-band map to {args.out}")
    return 0


def _eval_config(args) -> EvalConfig:
    return EvalConfig(
        geometry=resolve_geometry(args.geometry, args.spacing),
        device=args.device,
        stft_config=StftConfig(n_fft=args.n_fft, hop=args.hop, window=args.window),
        kind=beamformer_from_name(args.beamformer, args.diag_load, args.phat_eps),
        bands=parse_bands(args.bands),
        normalize_map=not args.no_normalize,
        log_compress_map=args.log_compress,
        train_config=TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            optimizer=args.optimizer,
            mixup_alpha=args.mixup_alpha,
            seed=args.seed,
        ),
        runs=getattr(args, "runs", 1),
        holdout_env=getattr(args, "holdout", None),
        threads=_threads(args),
        wav_root=args.wav_root,
    )


def cmd_train(args) -> int:
    entries = load_manifest(args.manifest)
    cfg = _eval_config(args)
    train_entries = [
        e for e in entries if e.split == "train" and (args.device is None or e.device == args.device)
    ]
    if not train_entries:
        raise ValueError("manifest has no train entries for the requested device")
    bands = cfg.bands or default_bands(read_wav(cfg.resolve_path(train_entries[0].wav_path)).sample_rate)
    cfg = dataclasses.replace(cfg, bands=bands)
    maps = extract_maps(train_entries, cfg)
    labels = np.array([e.class_index for e in train_entries])
    result = train(maps, labels, cfg.train_config)
    meta = preprocessing_metadata(
        band_edges_hz=bands.edges_hz,
        azimuths_deg=cfg.grid.azimuths_deg,
        elevations_deg=cfg.grid.elevations_deg,
        normalized=cfg.normalize_map,
        beamformer=args.beamformer,
    )
    save_checkpoint(result.net, args.out, preprocessing=meta)
    last = result.history[-1]
    print(
        f"trained {result.net.param_count} parameters for {last['epoch']} epochs; "
        f"final loss {last['loss']:.4f}, train accuracy {last['train_accuracy']:.3f}"
    )
    return 0


def cmd_eval(args) -> int:
    if args.mode == "env-independent" and args.holdout is None:
        raise UsageError("--holdout is required with --mode env-independent")
    entries = load_manifest(args.manifest)
    cfg = _eval_config(args)
    if cfg.bands is None:
        first = cfg.resolve_path(entries[0].wav_path)
        cfg = dataclasses.replace(cfg, bands=default_bands(read_wav(first).sample_rate))
    report = evaluate(entries, args.mode, cfg)
    write_report(report, args.out)
    overall = report["overall"]
    if overall is not None:
        ci = overall["ci95_half_width"]
        ci_text = f" +- {100 * ci:.2f}" if ci is not None else ""
        print(f"EER {100 * overall['mean_eer']:.2f}%{ci_text} over {report['runs']} run(s)")
    return 0


def cmd_inspect(args) -> int:
    acoustic = load_map(args.map_path)
    k, a, e = acoustic.values.shape
    summary = {
        "path": args.map_path,
        "shape": {"bands": k, "azimuths": a, "elevations": e},
        "beamformer": acoustic.beamformer,
        "normalized": acoustic.normalized,
        "sample_rate": acoustic.sample_rate,
        "bands": [],
    }
    for index in range(k):
        band = acoustic.values[index]
        peak = band_argmax(acoustic, index)
        summary["bands"].append(
            {
                "name": acoustic.bands.band_name(index),
                "edges_hz": list(acoustic.bands.edges_hz[index]),
                "min": float(band.min()),
                "max": float(band.max()),
                "argmax_azimuth_deg": peak.azimuth_deg,
                "argmax_elevation_deg": peak.elevation_deg,
            }
        )
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"{args.map_path}: {k} bands, {a}x{e} grid, beamformer={acoustic.beamformer}, "
              f"normalized={acoustic.normalized}")
        for band in summary["bands"]:
            print(
                f"  {band['name']}: range [{band['min']:.4g}, {band['max']:.4g}], "
                f"peak at az {band['argmax_azimuth_deg']:g} el {band['argmax_elevation_deg']:g}"
            )
    return 0


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileFormatError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
