import numpy as np
import pytest

from conftest import random_audio, random_cover
from stegkit import bmp, vfs, wav
from stegkit.cli import run


@pytest.fixture
def work(tmp_path, monkeypatch, rng):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "cover.bmp").write_bytes(bmp.save_bmp(random_cover(rng, 32, 32)))
    (tmp_path / "cover.wav").write_bytes(wav.save_wav(random_audio(rng, 4000)))
    (tmp_path / "secret.txt").write_bytes(b"the eagle has landed\n")
    return tmp_path


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "image" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["image"], ["image", "hide", "--cover", "x"],
                                  ["image", "extract", "--in", "a", "--out", "b", "--bits", "9"],
                                  ["image", "capacity", "--in", "missing.bmp"]])
def test_usage_errors(work, argv):
    assert run(argv) == 1


def test_image_round_trip(work, capsys):
    assert run(["image", "hide", "--cover", "cover.bmp", "--in", "secret.txt",
                "--out", "stego.bmp", "--bits", "2", "--pass", "pw"]) == 0
    assert "psnr=" in capsys.readouterr().err
    assert run(["image", "extract", "--in", "stego.bmp", "--out", "out.txt",
                "--bits", "2", "--pass", "pw"]) == 0
    assert (work / "out.txt").read_bytes() == b"the eagle has landed\n"
    assert run(["image", "extract", "--in", "stego.bmp", "--out", "x", "--bits", "2",
                "--pass", "bad"]) == 4
    assert run(["image", "extract", "--in", "stego.bmp", "--out", "x", "--bits", "1"]) == 2
    assert not (work / "x").exists()
    capsys.readouterr()
    assert run(["image", "analyze", "--cover", "cover.bmp", "--stego", "stego.bmp"]) == 0
    assert "psnr_db=" in capsys.readouterr().out


def test_image_capacity(work, capsys):
    assert run(["image", "capacity", "--in", "cover.bmp"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "bits,capacity_bytes,usable_bytes"
    assert lines[1] == "1,384,368" and len(lines) == 9


def test_capacity_exit_code(work):
    (work / "big").write_bytes(bytes(5000))
    assert run(["image", "hide", "--cover", "cover.bmp", "--in", "big", "--out", "s.bmp"]) == 3
    assert not (work / "s.bmp").exists()


def test_format_exit_code(work):
    (work / "junk.bmp").write_bytes(b"not an image")
    assert run(["image", "capacity", "--in", "junk.bmp"]) == 2


def test_audio_round_trip_and_tone(work, capsys):
    assert run(["audio", "hide", "--cover", "cover.wav", "--in", "secret.txt",
                "--out", "s.wav", "--bits", "4"]) == 0
    assert run(["audio", "extract", "--in", "s.wav", "--out", "o.txt", "--bits", "4"]) == 0
    assert (work / "o.txt").read_bytes() == b"the eagle has landed\n"
    (work / "quiet.wav").write_bytes(wav.save_wav(wav.make_wav(np.zeros(1024, np.int16))))
    assert run(["audio", "tone", "--in", "quiet.wav", "--out", "t.wav",
                "--amplitude", "0.3"]) == 0
    capsys.readouterr()
    assert run(["spectrum", "peak", "--in", "t.wav", "--method", "all"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 5
    assert all(abs(float(r.split(",")[1]) - 0.2) < 0.002 for r in rows)


def test_spectrum_estimate_and_compare(work, capsys):
    assert run(["spectrum", "estimate", "--in", "cover.wav", "--method", "yw",
                "--nfft", "64", "--out", "s.csv"]) == 0
    assert (work / "s.csv").read_text().splitlines()[0] == "freq,power"
    assert len((work / "s.csv").read_text().splitlines()) == 34
    assert run(["spectrum", "compare", "--trials", "10", "--out", "v.csv"]) == 0
    assert "% of bins" in capsys.readouterr().err
    (work / "zero.wav").write_bytes(wav.save_wav(wav.make_wav(np.zeros(64, np.int16))))
    assert run(["spectrum", "peak", "--in", "zero.wav", "--method", "yw"]) == 5


def test_text_round_trip(work, capsys):
    assert run(["text", "encode", "--in", "secret.txt", "--out", "mail.txt"]) == 0
    assert run(["text", "decode", "--in", "mail.txt", "--out", "back.txt"]) == 0
    assert (work / "back.txt").read_bytes() == b"the eagle has landed\n"
    (work / "g.txt").write_text("s:\n| a b\n| a c\n")
    capsys.readouterr()
    assert run(["text", "check-grammar", "--grammar", "g.txt"]) == 2
    assert "ll1-conflict" in capsys.readouterr().out
    assert run(["text", "check-grammar"]) == 0
    (work / "mail.txt").write_text("Dear Zebra ;")
    assert run(["text", "decode", "--in", "mail.txt", "--out", "b2"]) == 2


def test_vfs_workflow(work, capsys):
    assert run(["vfs", "format", "disk.img", "--clusters", "32"]) == 0
    (work / "a").write_bytes(bytes(200))
    (work / "b").write_bytes(b"b" * 3000)
    assert run(["vfs", "put", "disk.img", "docs/a", "--in", "a"]) == 0
    assert run(["vfs", "put", "disk.img", "b", "--in", "b"]) == 0
    assert run(["vfs", "put", "disk.img", "b", "--in", "a"]) == 1
    capsys.readouterr()
    assert run(["vfs", "slack-map", "disk.img"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert "docs/a,0,200,312,ram_slack" in rows and "docs/a,0,512,1536,file_slack" in rows

    (work / "hidden.bin").write_bytes(b"H" * 1000)
    assert run(["vfs", "slack-hide", "disk.img", "--in", "hidden.bin", "--meta", "m",
                "--pass", "pw", "--select", "intelligent", "--obfuscate", "random-key"]) == 0
    (work / "hidden.bin").unlink()
    assert run(["vfs", "slack-restore", "disk.img", "--meta", "m", "--pass", "pw"]) == 0
    assert (work / "hidden.bin").read_bytes() == b"H" * 1000
    # second restore would clobber the file
    assert run(["vfs", "slack-restore", "disk.img", "--meta", "m", "--pass", "pw"]) == 1
    assert run(["vfs", "slack-restore", "disk.img", "--meta", "m", "--pass", "no"]) == 4

    assert run(["vfs", "ads-attach", "disk.img", "b", "zone", "--in", "a"]) == 0
    capsys.readouterr()
    assert run(["vfs", "ads-scan", "disk.img"]) == 0
    assert capsys.readouterr().out == "b:zone:$DATA 200\n"
    assert run(["vfs", "export", "disk.img", "b", "--out", "b.out"]) == 0
    assert "zone" in capsys.readouterr().err
    assert (work / "b.out").read_bytes() == b"b" * 3000
    assert run(["vfs", "ads-remove", "disk.img", "b", "zone"]) == 0
    assert run(["vfs", "ads-scan", "disk.img"]) == 0
    assert capsys.readouterr().out == ""

    assert run(["vfs", "put", "disk.img", "b", "--in", "hidden.bin", "--force"]) == 0
    assert run(["vfs", "get", "disk.img", "b", "--out", "g"]) == 0
    assert (work / "g").read_bytes() == b"H" * 1000
    assert run(["vfs", "rm", "disk.img", "docs/a"]) == 0
    assert run(["vfs", "get", "disk.img", "docs/a", "--out", "g"]) == 1
    assert run(["vfs", "raw", "disk.img", "0", "--out", "r"]) == 0
    assert len((work / "r").read_bytes()) == 2048
    assert vfs.load_disk((work / "disk.img").read_bytes()).check() == []


def test_vfs_overwritten_slack(work, capsys):
    run(["vfs", "format", "d.img", "--clusters", "8"])
    (work / "f").write_bytes(bytes(100))
    (work / "p").write_bytes(b"p" * 500)
    run(["vfs", "put", "d.img", "f", "--in", "f"])
    assert run(["vfs", "slack-hide", "d.img", "--in", "p", "--meta", "m", "--pass", "pw"]) == 0
    (work / "f2").write_bytes(bytes(2000))
    run(["vfs", "put", "d.img", "f", "--in", "f2", "--force"])
    capsys.readouterr()
    assert run(["vfs", "slack-restore", "d.img", "--meta", "m", "--pass", "pw",
                "--out", "x"]) == 4
    assert "chunk in f" in capsys.readouterr().err


def test_vfs_not_an_image(work):
    (work / "bad.img").write_bytes(b"nope")
    assert run(["vfs", "ls", "bad.img"]) == 2
    assert run(["vfs", "ls", "absent.img"]) == 1


NODES = [[], ["image"], ["audio"], ["spectrum"], ["text"], ["vfs"]] + [
    [g, c] for g, cs in {
        "image": ["hide", "extract", "capacity", "analyze"],
        "audio": ["hide", "extract", "tone"],
        "spectrum": ["estimate", "peak", "compare"],
        "text": ["encode", "decode", "check-grammar"],
        "vfs": ["format", "put", "get", "rm", "ls", "raw", "slack-map", "slack-hide",
                "slack-restore", "ads-attach", "ads-read", "ads-scan", "ads-remove", "export"],
    }.items() for c in cs]


@pytest.mark.parametrize("node", NODES, ids=lambda n: " ".join(n) or "top")
def test_help_everywhere(node, capsys):
    assert run(node + ["--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_unknown_flag(work):
    assert run(["image", "capacity", "--in", "cover.bmp", "--bogus"]) == 1


def test_capacity_message(work, capsys):
    (work / "big").write_bytes(bytes(5000))
    assert run(["image", "hide", "--cover", "cover.bmp", "--in", "big", "--out", "s.bmp",
                "--name", ""]) == 3
    assert "needed 5016 bytes, available 384" in capsys.readouterr().err


def test_slack_hide_is_deterministic(work):
    run(["vfs", "format", "d.img", "--clusters", "16"])
    for i, size in enumerate([100, 2100, 700]):
        (work / f"f{i}").write_bytes(bytes([i]) * size)
        run(["vfs", "put", "d.img", f"f{i}", "--in", f"f{i}"])
    (work / "p").write_bytes(bytes(range(256)) * 6)
    base = (work / "d.img").read_bytes()
    images, metas = [], []
    for _ in range(2):
        (work / "d.img").write_bytes(base)
        assert run(["vfs", "slack-hide", "d.img", "--in", "p", "--meta", "m", "--pass", "pw",
                    "--select", "random", "--seed", "7", "--obfuscate", "random-key"]) == 0
        images.append((work / "d.img").read_bytes())
        metas.append((work / "m").read_bytes())
    assert images[0] == images[1] and images[0] != base
    assert metas[0] == metas[1]
