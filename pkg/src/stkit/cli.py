"""``stkit`` command line: one subcommand per recipe stage.

    stkit synth-corpus --n 32 --output-dir data
    stkit make-records --manifest data/manifest.tsv --out data/train.rec
    stkit learn-bpe --records data/train.rec --merges 8000 --out data/bpe.codes
    stkit build-vocab --records data/train.rec --bpe data/bpe.codes --out data/vocab.txt
    stkit train --task st --train-records data/train.rec --bpe-codes data/bpe.codes --vocab data/vocab.txt
    stkit decode --checkpoint run/ckpt-300 --records data/train.rec --out hyps.txt --refs-out refs.txt
    stkit score --metric bleu --refs refs.txt --hyps hyps.txt

Exit status: 0 on success, 2 on usage errors, 1 when the operation fails.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, StkitError

ASSETS = {"bpe": "bpe.codes", "vocab": "vocab.txt"}


class OperationError(Exception):
    """Raised by subcommands for failures that should exit with status 1."""


def _out_path(args, given, default_name):
    path = Path(given) if given else Path(args.output_dir or ".") / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(args, directory, name):
    """Write the resolved arguments of a run next to its outputs."""
    import yaml

    values = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / name, "w", encoding="utf-8") as f:
        yaml.safe_dump({"command": args.command, **values}, f, sort_keys=True, allow_unicode=True)


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line.replace("\n", " ") + "\n")


def _side_text(entry, field):
    """Training text for BPE/vocab: normalized transcriptions, tokenized translations."""
    from .text import normalize_source, tokenize

    value = entry[field]
    return " ".join(tokenize(normalize_source(value) if field == "transcription" else value))


def _corpus_sentences(args):
    from .data import read_records
    from .text import tokenize

    sents = []
    for path in args.text or []:
        sents.extend(" ".join(tokenize(s)) for s in _read_lines(path))
    fields = [f.strip() for f in args.fields.split(",") if f.strip()]
    for path in args.records or []:
        for entry in read_records(path):
            sents.extend(_side_text(entry, f) for f in fields if f in entry)
    if not sents:
        raise OperationError("no input sentences (give --records and/or --text)")
    return sents


# ---------------------------------------------------------------- subcommands

def cmd_synth_corpus(args):
    from .audio import write_wav
    from .data.synth import render, synth_digits, transcribe, translate

    out = Path(args.output_dir or ".")
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.n):
        digits = synth_digits(rng, args.min_digits, args.max_digits)
        wav, _ = render(digits, rng)
        name = f"wav/utt{i:05d}.wav"
        write_wav(out / name, wav)
        rows.append((f"utt{i:05d}", name, transcribe(digits), translate(digits)))
    manifest = out / "manifest.tsv"
    with open(manifest, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(("id", "audio", "transcription", "translation"))
        w.writerows(rows)
    _echo_config(args, out, "synth-corpus.yaml")
    print(f"wrote {args.n} utterances and {manifest}")


def cmd_extract_features(args):
    from .audio import FbankConfig, extract_features, read_wav

    feats = extract_features(read_wav(args.input), FbankConfig(num_filters=args.num_filters),
                             normalize=not args.no_cmvn)
    out = _out_path(args, args.out, Path(args.input).with_suffix(".npy").name)
    np.save(out, feats.data)
    print(f"{feats.num_frames} frames x {feats.num_dims} dims -> {out}")


def cmd_make_records(args):
    from .audio import extract_features, read_wav
    from .data import write_records

    manifest = Path(args.manifest)
    base = manifest.parent
    with open(manifest, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f, delimiter="\t"))
    if not rows:
        raise OperationError(f"{manifest} has no rows")

    def entries():
        for row in rows:
            entry = {}
            audio = row.get("audio")
            if audio:
                path = base / audio
                if path.suffix == ".npy":
                    entry["audio"] = np.load(path).astype(np.float32)
                else:
                    wav = read_wav(path)
                    if args.mode == "waveform":
                        entry["audio"] = wav.samples.astype(np.float32)
                        entry["sample_rate"] = str(wav.sample_rate_hz)
                    else:
                        entry["audio"] = extract_features(wav).data
            for key in ("transcription", "translation"):
                if row.get(key):
                    entry[key] = row[key]
            yield entry

    out = _out_path(args, args.out, "records.rec")
    count = write_records(entries(), out)
    _echo_config(args, out.parent, f"{out.stem}.make-records.yaml")
    print(f"wrote {count} records to {out}")


def cmd_learn_bpe(args):
    from .text import learn_bpe, word_counts

    model = learn_bpe(word_counts(_corpus_sentences(args)), args.merges)
    out = _out_path(args, args.out, "bpe.codes")
    model.save(out)
    print(f"learned {len(model)} merges -> {out}")


def cmd_build_vocab(args):
    from .text import BpeModel, apply_bpe, build_vocab

    bpe = BpeModel.load(args.bpe)
    vocab = build_vocab([apply_bpe(s.split(), bpe) for s in _corpus_sentences(args)])
    out = _out_path(args, args.out, "vocab.txt")
    vocab.save(out)
    print(f"{len(vocab)} entries (fingerprint {vocab.fingerprint()}) -> {out}")


def _load_task(kind, bpe_path, vocab_path, cfg=None):
    from .data import TaskSpec
    from .text import BpeModel, Vocabulary

    if not bpe_path or not vocab_path:
        raise ConfigError("BPE codes and vocabulary are required (bpe_codes / vocab)")
    overrides = {}
    if cfg is not None:
        overrides = dict(max_source_len=cfg.max_source_len, max_target_len=cfg.max_target_len,
                         batch_budget=cfg.batch_budget)
    return TaskSpec.for_task(kind, BpeModel.load(bpe_path), Vocabulary.load(vocab_path), **overrides)


def _load_examples(path, task):
    from .data import length_filter, read_records, task_map

    return length_filter([task_map(e, task, i) for i, e in enumerate(read_records(path))], task)


def cmd_train(args):
    from .config import KEYS, resolve_config
    from .executor import TrainOptions, train, warm_start
    from .models import Transformer, TransformerConfig
    from .tensor import ScheduleConfig

    flags = {k: getattr(args, k) for k in KEYS if hasattr(args, k)}
    cfg = resolve_config(file=args.config, flags=flags)
    if not cfg.train_records:
        raise ConfigError("train_records is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.yaml")
    task = _load_task(cfg.task, cfg.bpe_codes, cfg.vocab, cfg)
    examples = _load_examples(cfg.train_records, task)
    if not examples:
        raise OperationError(f"no training examples left in {cfg.train_records} after length filtering")
    dev = _load_examples(cfg.dev_records, task) if cfg.dev_records else None
    v = len(task.vocab)
    mcfg = TransformerConfig.for_task(cfg.task, v, v, num_encoder_layers=cfg.num_encoder_layers,
                                      num_decoder_layers=cfg.num_decoder_layers, d_model=cfg.d_model,
                                      ffn_dim=cfg.ffn_dim, num_heads=cfg.num_heads, dropout=cfg.dropout,
                                      frontend_channels=cfg.frontend_channels, max_positions=cfg.max_positions)
    model = Transformer(mcfg, cfg.seed)
    if cfg.init_checkpoint:
        prefixes = [p.strip() for p in (cfg.init_filter or "").split(",") if p.strip()] or None
        report = warm_start(model, cfg.init_checkpoint, prefixes, {"vocab": task.vocab.fingerprint()})
        print(f"warm start from {cfg.init_checkpoint}: {report.summary()}")
    schedule = ScheduleConfig.for_task(cfg.task, cfg.d_model)
    schedule = dataclasses.replace(schedule, **{k: getattr(cfg, k) for k in
                                                ("warmup_steps", "init_scale", "end_scale", "decay_at", "decay_steps")
                                                if getattr(cfg, k) is not None})
    options = TrainOptions(steps=cfg.steps, seed=cfg.seed, label_smoothing=cfg.label_smoothing,
                           save_interval=cfg.save_interval, keep_checkpoints=cfg.keep_checkpoints,
                           eval_interval=cfg.eval_interval, spec_augment=cfg.spec_augment, output_dir=str(out),
                           assets={ASSETS["bpe"]: cfg.bpe_codes, ASSETS["vocab"]: cfg.vocab})
    result = train(task, model, examples, schedule, options, dev=dev)
    last = result.losses[-1] if result.losses else float("nan")
    print(f"trained to step {result.step}; final loss {last:.4f}; checkpoints in {out}")


def cmd_average_checkpoints(args):
    from .executor import average_checkpoints, list_checkpoints, save_checkpoint

    inputs = list(args.inputs or [])
    if args.root:
        found = list_checkpoints(args.root)
        inputs.extend(found[-args.last:] if args.last else found)
    if not inputs:
        raise OperationError("no checkpoints to average (give --inputs or --root)")
    avg = average_checkpoints(inputs)
    out = _out_path(args, args.out, "averaged")
    files = {name: Path(inputs[-1]) / name for name in ASSETS.values() if (Path(inputs[-1]) / name).exists()}
    save_checkpoint(avg, out, files)
    print(f"averaged {len(inputs)} checkpoints (step {avg.step}) -> {out}")


def _load_model(directory):
    from .executor import load_checkpoint, restore_model
    from .models import Transformer, TransformerConfig

    ckpt = load_checkpoint(directory)
    model = restore_model(Transformer(TransformerConfig.from_dict(ckpt.config)), ckpt)
    model.eval()
    return model, ckpt


def _checkpoint_task(directory, ckpt, kind=None, bpe=None, vocab=None):
    kind = kind or ckpt.extra.get("task")
    if kind is None:
        raise ConfigError(f"{directory}: checkpoint does not record its task; pass --task")
    task = _load_task(kind, bpe or Path(directory) / ASSETS["bpe"], vocab or Path(directory) / ASSETS["vocab"])
    want = ckpt.fingerprints.get("vocab")
    if want and want != task.vocab.fingerprint():
        raise ConfigError(f"vocabulary fingerprint {task.vocab.fingerprint()} does not match checkpoint {want}")
    return task


def cmd_decode(args):
    from .data import read_records, task_reference, task_source
    from .executor import decode
    from .executor.trainer import hypothesis_text

    loaded = [_load_model(d) for d in args.checkpoint]
    models = [m for m, _ in loaded]
    task = _checkpoint_task(args.checkpoint[0], loaded[0][1], args.task, args.bpe, args.vocab)
    hyps, refs = [], []
    for i, entry in enumerate(read_records(args.records)):
        src = task_source(entry, task, i)
        if src.shape[0] == 0:
            hyps.append("")
        else:
            hyps.append(hypothesis_text(task, decode(models, src, beam=args.beam, max_len=args.max_len).body))
        if args.refs_out:
            refs.append(task_reference(entry, task) if task.target_field in entry else "")
    out = _out_path(args, args.out, "hyps.txt")
    _write_lines(out, hyps)
    if args.refs_out:
        _write_lines(_out_path(args, args.refs_out, "refs.txt"), refs)
    _echo_config(args, out.parent, f"{out.stem}.decode.yaml")
    print(f"decoded {len(hyps)} utterances -> {out}")


def cmd_cascade_decode(args):
    from .data import read_records, task_source
    from .executor import cascade_decode

    asr, asr_ckpt = _load_model(args.asr_checkpoint)
    mt, mt_ckpt = _load_model(args.mt_checkpoint)
    asr_task = _checkpoint_task(args.asr_checkpoint, asr_ckpt, "asr")
    mt_task = _checkpoint_task(args.mt_checkpoint, mt_ckpt, "mt")
    hyps, transcripts = [], []
    for i, entry in enumerate(read_records(args.records)):
        gold = entry.get("transcription") if args.oracle_transcript else None
        if args.oracle_transcript and gold is None:
            raise OperationError(f"record {i} has no transcription for --oracle-transcript")
        feats = None if gold is not None else task_source(entry, asr_task, i)
        res = cascade_decode(asr, mt, feats, asr_task, mt_task, beam=args.beam, transcript=gold)
        hyps.append(res.translation)
        transcripts.append(res.transcript)
    out = _out_path(args, args.out, "cascade.txt")
    _write_lines(out, hyps)
    if args.transcripts_out:
        _write_lines(_out_path(args, args.transcripts_out, "transcripts.txt"), transcripts)
    _echo_config(args, out.parent, f"{out.stem}.cascade-decode.yaml")
    print(f"decoded {len(hyps)} utterances -> {out}")


def cmd_score(args):
    from .metrics import BleuMode, bleu, format_score, wer

    refs, hyps = _read_lines(args.refs), _read_lines(args.hyps)
    if len(refs) != len(hyps):
        raise OperationError(f"{args.refs} has {len(refs)} lines but {args.hyps} has {len(hyps)}")
    if args.metric == "wer":
        value = wer([r.split() for r in refs], [h.split() for h in hyps])
    else:
        value = bleu(refs, hyps, BleuMode.parse(args.case, args.tok))
    print(format_score(args.metric, value))


# ---------------------------------------------------------------- parser

def _add_run_config_flags(p):
    from .config import KEYS

    for name, f in KEYS.items():
        if name in ("seed", "output_dir"):
            continue
        flag = "--" + name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
            continue
        kind = {"int": int, "float": float}.get(str(f.type).split(" |")[0], str)
        p.add_argument(flag, dest=name, type=kind, default=None)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of run-config keys")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--output-dir", dest="output_dir", default=None)

    parser = argparse.ArgumentParser(prog="stkit", description="Speech translation toolkit recipes.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = add("synth-corpus", cmd_synth_corpus, "Render a synthetic digit-tone corpus (WAV files + manifest.tsv).")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--min-digits", type=int, default=3)
    p.add_argument("--max-digits", type=int, default=6)

    p = add("extract-features", cmd_extract_features, "Log-mel filterbank features of one WAV file as .npy.")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--num-filters", type=int, default=80)
    p.add_argument("--no-cmvn", action="store_true", help="skip per-utterance mean/variance normalization")

    p = add("make-records", cmd_make_records, "Pack a TSV manifest (audio, transcription, translation) into records.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--mode", choices=("features", "waveform"), default="features")

    for name, func, help_ in (("learn-bpe", cmd_learn_bpe, "Learn BPE merges from records and/or text files."),
                              ("build-vocab", cmd_build_vocab, "Build the subword vocabulary.")):
        p = add(name, func, help_)
        p.add_argument("--records", nargs="*")
        p.add_argument("--text", nargs="*", help="plain text files, one sentence per line")
        p.add_argument("--fields", default="transcription,translation")
        p.add_argument("--out")
        if name == "learn-bpe":
            p.add_argument("--merges", type=int, default=8000)
        else:
            p.add_argument("--bpe", required=True)

    p = add("train", cmd_train, "Train a model; every run-config key is also a flag.")
    _add_run_config_flags(p)

    p = add("average-checkpoints", cmd_average_checkpoints, "Average checkpoint parameters elementwise.")
    p.add_argument("--inputs", nargs="*")
    p.add_argument("--root", help="directory holding ckpt-* checkpoints")
    p.add_argument("--last", type=int, default=10, help="with --root: average the latest N (0 = all)")
    p.add_argument("--out")

    p = add("decode", cmd_decode, "Beam-decode records; several --checkpoint values form an ensemble.")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.add_argument("--refs-out")
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--task", choices=("asr", "mt", "st"))
    p.add_argument("--bpe")
    p.add_argument("--vocab")

    p = add("cascade-decode", cmd_cascade_decode, "ASR then MT decoding of speech records.")
    p.add_argument("--asr-checkpoint", required=True)
    p.add_argument("--mt-checkpoint", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.add_argument("--transcripts-out")
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--oracle-transcript", action="store_true", help="feed gold transcriptions to the MT leg")

    p = add("score", cmd_score, "Score hypotheses against references.")
    p.add_argument("--metric", choices=("bleu", "wer"), required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--case", choices=("sensitive", "insensitive"), default="sensitive")
    p.add_argument("--tok", choices=("tok", "detok"), default="detok")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    if args.seed is None and args.command != "train":
        args.seed = 0
    try:
        args.func(args)
    except (StkitError, OperationError, OSError, ValueError, KeyError) as e:
        print(f"stkit {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
