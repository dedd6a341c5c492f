import subprocess
import sys

import pytest

from tempattn.cli import dispatch
from tempattn.config import ConfigError, RunConfig, parse_config_text

from helpers import SMOKE_ARTIFACTS, smoke_pipeline, write_toy_bitext


def test_no_args_is_usage_error(capsys):
    assert dispatch([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert dispatch(["eval", "--hyp", "a", "--ref", "b", "--nope"]) == 1


def test_missing_checkpoint_names_path(tmp_path, capsys):
    (tmp_path / "in.txt").write_text("a b\n")
    code = dispatch(["translate", "--checkpoint", str(tmp_path / "gone.ckpt"), "--input",
                     str(tmp_path / "in.txt"), "--output", str(tmp_path / "out.txt")])
    assert code == 2
    assert "gone.ckpt" in capsys.readouterr().err


def test_unknown_config_key_is_named(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("hidden_dim = 4\nbogus_key = 1\n")
    assert dispatch(["train", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_eval_on_same_file(tmp_path, capsys):
    write_toy_bitext(tmp_path)
    f = str(tmp_path / "dev.tgt")
    assert dispatch(["eval", "--hyp", f, "--ref", f]) == 0
    out = capsys.readouterr().out
    assert "BLEU=100.000" in out and "TER=0.000" in out and "TB=-50.000" in out


def test_eval_line_count_mismatch(tmp_path):
    (tmp_path / "a").write_text("x\ny\n")
    (tmp_path / "b").write_text("x\n")
    assert dispatch(["eval", "--hyp", str(tmp_path / "a"), "--ref", str(tmp_path / "b")]) == 2


def test_align_eval_with_machine_file(tmp_path, capsys):
    (tmp_path / "m").write_text("0-0 1-0\n")
    (tmp_path / "g").write_text("0-0 1-1\n")
    assert dispatch(["align-eval", "--gold", str(tmp_path / "g"), "--machine", str(tmp_path / "m")]) == 0
    assert capsys.readouterr().out.strip() == "P=0.5000 R=0.5000 F1=0.5000"


def test_rep_stats(tmp_path, capsys):
    (tmp_path / "h").write_text("a b c a b c\nx x x x\n")
    assert dispatch(["rep-stats", "--input", str(tmp_path / "h")]) == 0
    assert capsys.readouterr().out.strip() == "count=2 avg_len=2.500"


def test_help_per_subcommand():
    for cmd in ["learn-bpe", "train", "translate", "eval", "dump-attn"]:
        r = subprocess.run([sys.executable, "-m", "tempattn", cmd, "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "--seed" in r.stdout


def test_config_parsing():
    assert parse_config_text("a_key_typo = 1\n" if False else "beam = 4  # wide\n\n# c\n") == {"beam": "4"}
    with pytest.raises(ConfigError, match="line_noise"):
        parse_config_text("line_noise = 3\n")
    with pytest.raises(ConfigError, match=":1"):
        parse_config_text("no equals sign\n")
    rc = RunConfig.load(None, {"history_window": "inf", "variant": "temporal", "beam": None})
    cfg = rc.model_config(10, 12)
    assert cfg.history_window == 0 and cfg.variant == "temporal" and rc.int("beam") == 10
    with pytest.raises(ConfigError):
        RunConfig.load(None, {"hidden_dim": "wide"}).model_config(5, 5)


def test_smoke_pipeline_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes_a, outs_a = smoke_pipeline(a)
    codes_b, outs_b = smoke_pipeline(b)
    assert codes_a == [0] * len(codes_a) and codes_b == codes_a
    assert outs_a == outs_b
    for f in SMOKE_ARTIFACTS:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    assert outs_a[7].startswith("BLEU=")


def test_dump_attn_and_variant_guard(tmp_path, capsys):
    smoke_pipeline(tmp_path)
    ck = str(tmp_path / "run" / "best.ckpt")
    src = str(tmp_path / "bpe.dev.src")
    assert dispatch(["dump-attn", "--checkpoint", ck, "--src", src, "--output", str(tmp_path / "d.txt"),
                     "--beam", "2"]) == 0
    assert (tmp_path / "d.txt").read_text().startswith("SENT 0 T=")
    # temporal and global share every tensor, so switching the variant at decode time is allowed
    assert dispatch(["translate", "--checkpoint", ck, "--input", src, "--output", str(tmp_path / "g.txt"),
                     "--variant", "global", "--history-window", "2", "--len-norm", "off"]) == 0
    assert dispatch(["translate", "--checkpoint", ck, "--input", src, "--output", str(tmp_path / "c.txt"),
                     "--variant", "coverage"]) == 2
    assert "coverage" in capsys.readouterr().err
