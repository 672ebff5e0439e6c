"""Command-line interface: preprocess, train, convert, evaluate."""

from __future__ import annotations

import argparse
import importlib
import sys
from pathlib import Path

from . import convert as convert_mod
from . import rdd as rdd_mod
from .audio import read_wav
from .checkpoint import describe_checkpoint
from .config import DspConfig, load_config_file, preset
from .extract import preprocess_corpus
from .metrics import registry
from .providers import build_provider_set
from .store import FeatureStore, parse_manifest
from .train import train


def _add_preprocess(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("preprocess", help="extract features for a manifest into a store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--providers", default="stub", help="provider set name (default: stub)")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--sample-rate", type=int, default=44100)
    p.add_argument("--hop", type=int, default=512)
    p.add_argument("--fft", type=int, default=2048)
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--bert-dim", type=int, default=192)
    p.add_argument("--ssl-dim", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_run_preprocess)


def _run_preprocess(args: argparse.Namespace) -> int:
    dsp = DspConfig(
        sample_rate=args.sample_rate,
        fft_size=args.fft,
        hop_length=args.hop,
        n_mels=args.n_mels,
    )
    manifest = parse_manifest(
        args.manifest, sample_rate=args.sample_rate, hop_length=args.hop, fft_size=args.fft
    )
    providers = build_provider_set(
        args.providers, dsp, args.seed, bert_dim=args.bert_dim, ssl_dim=args.ssl_dim
    )
    store = preprocess_corpus(
        manifest, providers, dsp, args.out, seed=args.seed, workers=args.workers
    )
    print(f"extracted {len(manifest.entries)} utterances into {store.root}")
    return 0


def _add_train(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("train", help="train on a feature store")
    p.add_argument("--features", required=True)
    p.add_argument("--config", default=None, help="flat key=value overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--resume", default=None, help="checkpoint path, or 'auto'")
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=_run_train)


def _run_train(args: argparse.Namespace) -> int:
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config_file(args.config, base=cfg)
    store = FeatureStore(args.features)
    written = train(store, cfg, args.out, resume_from=args.resume, log_every=args.log_every)
    print(f"finished at step {cfg.train.total_steps}; wrote {len(written)} checkpoints")
    return 0


def _add_convert(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("convert", help="convert one utterance to a target speaker")
    p.add_argument("--src", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--repredict", action="store_true", help="re-predict durations")
    p.add_argument("--pace", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--providers", default="stub")
    p.set_defaults(func=_run_convert)


def _run_convert(args: argparse.Namespace) -> int:
    result = convert_mod.convert_file(
        args.src,
        args.speaker,
        args.ckpt,
        args.out,
        repredict=args.repredict,
        pace=args.pace,
        seed=args.seed,
        provider_name=args.providers,
    )
    print(
        f"wrote {args.out}: {len(result.audio)} samples, "
        f"{int(result.used_durations.sum())} frames"
    )
    return 0


def _add_convert_batch(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("convert-batch", help="convert every utterance in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repredict", action="store_true")
    p.add_argument("--pace", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--providers", default="stub")
    p.set_defaults(func=_run_convert_batch)


def _run_convert_batch(args: argparse.Namespace) -> int:
    manifest = parse_manifest(args.manifest)
    summary = convert_mod.batch_convert(
        manifest,
        args.speaker,
        args.ckpt,
        args.out,
        repredict=args.repredict,
        pace=args.pace,
        seed=args.seed,
        provider_name=args.providers,
    )
    print(f"converted {len(summary.results)} utterances, {len(summary.failures)} failures")
    return 0 if not summary.failures else 1


def _add_evaluate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("evaluate", help="evaluation tools")
    esub = p.add_subparsers(dest="evaluate_command", required=True)

    rdd_p = esub.add_parser("rdd", help="relative duration deviation report")
    rdd_p.add_argument("--conv", required=True, help="converted-speech profiles")
    rdd_p.add_argument("--source", required=True, help="source-speech profiles")
    rdd_p.add_argument("--target", required=True, help="target-reference profiles")
    rdd_p.add_argument("--out", required=True)
    rdd_p.set_defaults(func=_run_evaluate_rdd)

    m_p = esub.add_parser("metric", help="run a registered external metric over WAV pairs")
    m_p.add_argument("--name", required=True)
    m_p.add_argument("--client", default=None, help="module:attr to register as the client")
    m_p.add_argument("--conv", required=True, help="directory of converted WAVs")
    m_p.add_argument("--ref", required=True, help="directory of reference WAVs (matched by stem)")
    m_p.add_argument("--out", required=True)
    m_p.set_defaults(func=_run_evaluate_metric)


def _run_evaluate_rdd(args: argparse.Namespace) -> int:
    report = rdd_mod.rdd_report(
        rdd_mod.load_profile_groups(args.conv),
        rdd_mod.load_profile_groups(args.source),
        rdd_mod.load_profile_groups(args.target),
    )
    text = rdd_mod.format_report(report)
    Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _run_evaluate_metric(args: argparse.Namespace) -> int:
    if args.client:
        module_name, _, attr = args.client.partition(":")
        client = getattr(importlib.import_module(module_name), attr)
        if args.name not in registry.names():
            registry.register(args.name, client)
    conv_dir, ref_dir = Path(args.conv), Path(args.ref)
    pairs = []
    for wav in sorted(conv_dir.glob("*.wav")):
        ref = ref_dir / wav.name
        if not ref.is_file():
            continue
        audio, _ = read_wav(wav)
        ref_audio, _ = read_wav(ref)
        pairs.append((wav.stem, audio, ref_audio))
    report = registry.evaluate(args.name, pairs)
    lines = [f"# metric: {report.name}"]
    for r in report.results:
        lines.append(f"{r.utterance_id} {'ERROR ' + r.error if r.error else r.score}")
    lines.append(f"mean {report.mean}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def _add_describe(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("describe", help="list checkpoint parameter names and shapes")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=_run_describe)


def _run_describe(args: argparse.Namespace) -> int:
    for name, shape in describe_checkpoint(args.ckpt).items():
        print(f"{name}\t{list(shape)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonevc", description="Phoneme-level voice conversion toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_preprocess(sub)
    _add_train(sub)
    _add_convert(sub)
    _add_convert_batch(sub)
    _add_evaluate(sub)
    _add_describe(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
