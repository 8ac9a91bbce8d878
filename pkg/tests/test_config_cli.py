import numpy as np
import pytest
import yaml

from stkit.cli import run
from stkit.config import RunConfig, load_config_file, resolve_config
from stkit.errors import ConfigError
from stkit.executor import Checkpoint, list_checkpoints, load_checkpoint, save_checkpoint


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults():
    assert resolve_config() == RunConfig()
    cfg = RunConfig()
    assert (cfg.beam, cfg.keep_checkpoints, cfg.d_model, cfg.label_smoothing) == (4, 10, 256, 0.1)


def test_flag_beats_file_beats_default(tmp_path):
    f = write_yaml(tmp_path / "c.yaml", {"beam": 8, "seed": 3})
    cfg = resolve_config(file=f, flags={"beam": 4, "seed": None})
    assert (cfg.beam, cfg.seed) == (4, 3)
    assert resolve_config(defaults={"steps": 5}, file=f).steps == 5


def test_unknown_key_is_named(tmp_path):
    f = write_yaml(tmp_path / "c.yaml", {"beem": 8})
    with pytest.raises(ConfigError, match="beem"):
        resolve_config(file=f)
    with pytest.raises(ConfigError, match="colour"):
        resolve_config(flags={"colour": 1})


def test_bad_files(tmp_path):
    (tmp_path / "bad.yaml").write_text("beam: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n")
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "list.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert load_config_file(tmp_path / "empty.yaml") == {}
    with pytest.raises(ConfigError):
        resolve_config(flags={"task": "tts"})


def test_saved_config_resolves_back(tmp_path):
    cfg = resolve_config(flags={"beam": 2, "task": "mt"})
    cfg.save(tmp_path / "config.yaml")
    assert resolve_config(file=tmp_path / "config.yaml") == cfg


def test_score_identity(tmp_path, capsys):
    r = tmp_path / "r.txt"
    r.write_text("Un deux trois quatre.\nCinq six sept huit.\n")
    assert run(["score", "--metric", "bleu", "--refs", str(r), "--hyps", str(r)]) == 0
    assert capsys.readouterr().out == "BLEU = 100.00\n"
    assert run(["score", "--metric", "wer", "--refs", str(r), "--hyps", str(r)]) == 0
    assert capsys.readouterr().out == "WER = 0.000\n"


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["score", "--metric", "bleu", "--bogus"])
    assert exc.value.code == 2
    missing = str(tmp_path / "missing.txt")
    assert run(["score", "--metric", "bleu", "--refs", missing, "--hyps", missing]) == 1
    assert "error" in capsys.readouterr().err
    (tmp_path / "a.txt").write_text("a\n")
    (tmp_path / "b.txt").write_text("a\nb\n")
    assert run(["score", "--metric", "wer", "--refs", str(tmp_path / "a.txt"), "--hyps", str(tmp_path / "b.txt")]) == 1


def test_average_identical_dirs(tmp_path):
    params = {"w": np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32)}
    for i in range(10):
        save_checkpoint(Checkpoint(params, i + 1), tmp_path / f"ckpt-{i + 1}")
    assert run(["average-checkpoints", "--root", str(tmp_path), "--out", str(tmp_path / "avg")]) == 0
    avg = load_checkpoint(tmp_path / "avg")
    assert avg.params["w"].tobytes() == params["w"].tobytes()
    assert avg.step == 10
    assert run(["average-checkpoints", "--root", str(tmp_path / "none")]) == 1


TINY = {"num_encoder_layers": 1, "num_decoder_layers": 1, "d_model": 16, "ffn_dim": 32, "num_heads": 2,
        "frontend_channels": 4, "dropout": 0.0, "warmup_steps": 10, "init_scale": 1.0, "decay_at": None,
        "save_interval": 2, "steps": 3}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert run(["synth-corpus", "--n", "4", "--output-dir", str(d), "--seed", "1"]) == 0
    assert run(["make-records", "--manifest", str(d / "manifest.tsv"), "--out", str(d / "train.rec")]) == 0
    assert run(["learn-bpe", "--records", str(d / "train.rec"), "--merges", "50", "--out", str(d / "bpe.codes")]) == 0
    assert run(["build-vocab", "--records", str(d / "train.rec"), "--bpe", str(d / "bpe.codes"),
                "--out", str(d / "vocab.txt")]) == 0
    return d


def train_args(corpus, task, out, **extra):
    cfg = {**TINY, "task": task, "train_records": str(corpus / "train.rec"), "bpe_codes": str(corpus / "bpe.codes"),
           "vocab": str(corpus / "vocab.txt"), **extra}
    f = write_yaml(out.parent / f"{out.name}.yaml", cfg)
    return ["train", "--config", str(f), "--output-dir", str(out)]


def test_pipeline_plumbing(corpus, tmp_path, capsys):
    run_dir = tmp_path / "st"
    assert run(train_args(corpus, "st", run_dir) + ["--steps", "4"]) == 0
    echoed = yaml.safe_load((run_dir / "config.yaml").read_text())
    assert echoed["steps"] == 4 and echoed["d_model"] == 16
    ckpts = list_checkpoints(run_dir)
    assert [p.name for p in ckpts] == ["ckpt-2", "ckpt-4"]
    assert (ckpts[-1] / "vocab.txt").exists() and (ckpts[-1] / "bpe.codes").exists()
    hyps, refs = tmp_path / "hyps.txt", tmp_path / "refs.txt"
    assert run(["decode", "--checkpoint", str(ckpts[-1]), "--records", str(corpus / "train.rec"),
                "--out", str(hyps), "--refs-out", str(refs), "--beam", "2", "--max-len", "5"]) == 0
    assert len(hyps.read_text().splitlines()) == 4
    assert refs.read_text().splitlines()[0][0].isupper()
    assert run(["decode", "--checkpoint", str(ckpts[0]), str(ckpts[1]), "--records", str(corpus / "train.rec"),
                "--out", str(tmp_path / "ens.txt"), "--max-len", "5"]) == 0
    capsys.readouterr()
    assert run(["score", "--metric", "bleu", "--refs", str(refs), "--hyps", str(hyps)]) == 0
    assert capsys.readouterr().out.startswith("BLEU = ")


def test_extract_features(corpus, tmp_path):
    out = tmp_path / "f.npy"
    assert run(["extract-features", "--input", str(corpus / "wav" / "utt00000.wav"), "--out", str(out)]) == 0
    feats = np.load(out)
    assert feats.shape[1] == 80


def test_cascade_with_oracle_transcripts(corpus, tmp_path):
    assert run(train_args(corpus, "asr", tmp_path / "asr")) == 0
    assert run(train_args(corpus, "mt", tmp_path / "mt")) == 0
    out = tmp_path / "cascade.txt"
    assert run(["cascade-decode", "--asr-checkpoint", str(tmp_path / "asr" / "ckpt-3"),
                "--mt-checkpoint", str(tmp_path / "mt" / "ckpt-3"), "--records", str(corpus / "train.rec"),
                "--out", str(out), "--transcripts-out", str(tmp_path / "tr.txt"), "--beam", "1",
                "--oracle-transcript"]) == 0
    assert len(out.read_text().splitlines()) == 4
    assert (tmp_path / "tr.txt").read_text().splitlines()[0].islower()


def test_train_requires_records(tmp_path):
    assert run(["train", "--output-dir", str(tmp_path)]) == 1
