"""Command-line entry point: ``stegkit {image,audio,spectrum,text,vfs} ...``.

Exit codes: 0 ok, 1 usage, 2 format/parse, 3 capacity, 4 integrity/auth,
5 numeric. Output files are written atomically, and only on success.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import math
import os
import sys
import tempfile
from pathlib import Path

from . import bmp, mimic, spectral, vfs, wav
from .errors import FormatError, StegError, UsageError
from .payload import frame_payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, data: bytes | str, clobber: bool = True) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    target = Path(path)
    if not clobber and target.exists():
        raise UsageError(f"refusing to overwrite {target}")
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


# -- image ---------------------------------------------------------------------

def cmd_image_hide(a):
    cover = bmp.load_bmp(_read(a.cover))
    body = _read(a.input)
    frame = frame_payload(body, a.name if a.name is not None else Path(a.input).name, a.passphrase)
    stego = bmp.embed(cover, frame, a.bits)
    _write(a.out, bmp.save_bmp(stego))
    d = bmp.distortion(cover, stego)
    print(f"hid {len(body)} bytes ({len(frame)} framed) at {a.bits} bits; "
          f"mse={d.mse:.6g} psnr={_db(d.psnr_db)}", file=sys.stderr)


def cmd_image_extract(a):
    body, name = bmp.extract(bmp.load_bmp(_read(a.input)), a.bits, a.passphrase)
    _write(a.out, body)
    print(f"extracted {len(body)} bytes (original name {name!r})", file=sys.stderr)


def cmd_image_capacity(a):
    img = bmp.load_bmp(_read(a.input))
    bits = range(1, 9) if a.bits is None else [a.bits]
    print("bits,capacity_bytes,usable_bytes")
    for k in bits:
        cap = bmp.capacity(img, k)
        print(f"{k},{cap},{max(cap - 16, 0)}")


def cmd_image_analyze(a):
    d = bmp.distortion(bmp.load_bmp(_read(a.cover)), bmp.load_bmp(_read(a.stego)))
    print(f"mse={d.mse!r}")
    print(f"psnr_db={_db(d.psnr_db)}")


def _db(psnr: float) -> str:
    return "identical" if math.isinf(psnr) else f"{psnr:.4f}"


# -- audio ---------------------------------------------------------------------

def cmd_audio_hide(a):
    cover = wav.load_wav(_read(a.cover))
    body = _read(a.input)
    frame = frame_payload(body, a.name if a.name is not None else Path(a.input).name, a.passphrase)
    _write(a.out, wav.save_wav(wav.embed_audio(cover, frame, a.bits)))
    print(f"hid {len(body)} bytes ({len(frame)} framed) at {a.bits} bits", file=sys.stderr)


def cmd_audio_extract(a):
    body, name = wav.extract_audio(wav.load_wav(_read(a.input)), a.bits, a.passphrase)
    _write(a.out, body)
    print(f"extracted {len(body)} bytes (original name {name!r})", file=sys.stderr)


def cmd_audio_tone(a):
    audio, clipped = wav.add_tone(wav.load_wav(_read(a.input)), a.freq, a.amplitude)
    _write(a.out, wav.save_wav(audio))
    print(f"clipped {clipped} samples", file=sys.stderr)


# -- spectrum ------------------------------------------------------------------

def _config(a) -> spectral.EstimatorConfig:
    return spectral.EstimatorConfig(nfft=a.nfft, order=a.order, bt_max_lag=a.max_lag)


def cmd_spectrum_estimate(a):
    x = wav.to_signal(wav.load_wav(_read(a.input)))
    est = spectral.estimate(x, a.method, _config(a))
    _emit(est.to_csv(), a.out)


def cmd_spectrum_peak(a):
    x = wav.to_signal(wav.load_wav(_read(a.input)))
    methods = spectral.METHODS if a.method == "all" else [a.method]
    print("method,peak_freq")
    for m in methods:
        print(f"{m},{spectral.peak_frequency(spectral.estimate(x, m, _config(a)))!r}")


def cmd_spectrum_compare(a):
    report = spectral.compare_variance(a.trials, a.n, a.max_lag, a.nfft, a.seed)
    _emit(report.to_csv(), a.out)
    print(f"blackman-tukey variance lower at {100 * report.bt_lower_fraction:.1f}% of bins",
          file=sys.stderr)


# -- text ----------------------------------------------------------------------

def _grammar(a) -> mimic.MimicGrammar:
    return mimic.load_grammar(_read(a.grammar)) if a.grammar else mimic.default_grammar()


def cmd_text_encode(a):
    body = _read(a.input)
    name = a.name if a.name is not None else Path(a.input).name
    _emit(mimic.hide_text(body, _grammar(a), name, a.passphrase), a.out)


def cmd_text_decode(a):
    text = _read(a.input).decode("utf-8", errors="replace")
    body, name = mimic.mimic_decode(text, _grammar(a), a.passphrase)
    _write(a.out, body)
    print(f"decoded {len(body)} bytes (original name {name!r})", file=sys.stderr)


def cmd_text_check(a):
    g = mimic.parse_grammar_text(_read(a.grammar).decode("utf-8")) if a.grammar else \
        mimic.default_grammar()
    report = mimic.validate_grammar(g)
    for w in report.warnings:
        print(f"warning: {w}")
    for v in report.violations:
        print(v)
    if not report.ok:
        raise FormatError(f"{len(report.violations)} grammar violation(s)")
    print(f"ok: {len(g.productions)} productions, start <{g.start}>")


# -- vfs -----------------------------------------------------------------------

@contextlib.contextmanager
def _locked_disk(path, write: bool):
    """Hold an advisory lock on the image for the whole command."""
    while True:
        try:
            fh = open(path, "rb")
        except OSError as exc:
            raise UsageError(f"cannot open {path}: {exc.strerror}") from None
        fcntl.flock(fh, fcntl.LOCK_EX if write else fcntl.LOCK_SH)
        # a writer may have replaced the file while we waited for the lock
        if os.fstat(fh.fileno()).st_ino == os.stat(path).st_ino:
            break
        fh.close()
    with fh:
        disk = vfs.load_disk(fh.read())
        yield disk
        if write:
            _write(path, disk.to_bytes())


def cmd_vfs_format(a):
    _write(a.image, vfs.format_disk(a.clusters, a.sectors_per_cluster).to_bytes())


def cmd_vfs_put(a):
    content = _read(a.input)
    with _locked_disk(a.image, True) as d:
        d.write_file(a.path, content, overwrite=a.force)


def cmd_vfs_get(a):
    with _locked_disk(a.image, False) as d:
        data = d.read_file(a.path)
    _write(a.out, data)


def cmd_vfs_rm(a):
    with _locked_disk(a.image, True) as d:
        d.delete_file(a.path)


def cmd_vfs_ls(a):
    with _locked_disk(a.image, False) as d:
        for e in d.in_scope(a.root, a.levels):
            print(f"{e.size}\t{e.path}")


def cmd_vfs_raw(a):
    with _locked_disk(a.image, False) as d:
        data = d.read_raw(a.cluster)
    _write(a.out, data)


def cmd_vfs_slack_map(a):
    with _locked_disk(a.image, False) as d:
        print("path,cluster,offset,length,kind")
        for e in vfs.slack_map(d, a.root, a.levels):
            print(f"{e.path},{e.cluster},{e.offset},{e.length},{e.kind}")


def _xor_key(a) -> bytes | None:
    return _read(a.xor_file) if a.xor_file else None


def cmd_vfs_slack_hide(a):
    payload = _read(a.input)
    obfuscation = a.obfuscate.replace("-", "_")
    if obfuscation == "xor_file" and not a.xor_file:
        raise UsageError("--obfuscate xor-file needs --xor-file")
    with _locked_disk(a.image, True) as d:
        meta = vfs.slack_hide(d, payload, a.passphrase, a.select, obfuscation, a.seed,
                              _xor_key(a), a.root, a.levels, name=Path(a.input).name)
        _write(a.meta, meta)
    print(f"hid {len(payload)} bytes in slack space", file=sys.stderr)


def cmd_vfs_slack_restore(a):
    meta_raw = _read(a.meta)
    with _locked_disk(a.image, False) as d:
        payload = vfs.slack_restore(d, meta_raw, a.passphrase, _xor_key(a))
    # the stored name never carries directories
    out = a.out or Path(vfs.read_slack_metadata(meta_raw, a.passphrase)["name"] or "").name
    if not out:
        raise UsageError("metadata holds no original name; pass --out")
    _write(out, payload, clobber=a.out is not None)


def cmd_vfs_ads_attach(a):
    content = _read(a.input)
    with _locked_disk(a.image, True) as d:
        vfs.ads_attach(d, a.path, a.stream, content)


def cmd_vfs_ads_read(a):
    with _locked_disk(a.image, False) as d:
        data = vfs.ads_read(d, a.path, a.stream)
    _write(a.out, data)


def cmd_vfs_ads_scan(a):
    with _locked_disk(a.image, False) as d:
        for row in vfs.ads_scan(d, a.root, a.levels):
            print(row)


def cmd_vfs_ads_remove(a):
    with _locked_disk(a.image, True) as d:
        vfs.ads_remove(d, a.path, a.stream)


def cmd_vfs_export(a):
    with _locked_disk(a.image, False) as d:
        result = vfs.export_file(d, a.path, a.with_streams)
    _write(a.out, result.main)
    for name, data in result.streams.items():
        _write(f"{a.out}.{name}", data)
    for name in result.dropped:
        print(f"warning: stream {a.path}:{name} cannot be copied to a FAT volume "
              f"and was dropped", file=sys.stderr)


# -- parser --------------------------------------------------------------------

def _bits(value: str) -> int:
    k = int(value)
    if not 1 <= k <= 8:
        raise argparse.ArgumentTypeError("bits must be in 1..8")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stegkit", description=__doc__.splitlines()[0])
    top = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def sub(group, name, fn, help_):
        sp = group.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    def secret(sp):
        sp.add_argument("--pass", dest="passphrase", default=None,
                        help="DES passphrase (optional)")

    # image
    g = top.add_parser("image", help="LSB hiding in 24-bit BMP images").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    sp = sub(g, "hide", cmd_image_hide, "hide a file in a BMP cover")
    sp.add_argument("--cover", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bits", type=_bits, default=1)
    sp.add_argument("--name", default=None, help="name stored in the frame")
    secret(sp)
    sp = sub(g, "extract", cmd_image_extract, "recover a hidden file from a BMP")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bits", type=_bits, default=1)
    secret(sp)
    sp = sub(g, "capacity", cmd_image_capacity, "capacity per bit depth")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--bits", type=_bits, default=None)
    sp = sub(g, "analyze", cmd_image_analyze, "MSE and PSNR between cover and stego")
    sp.add_argument("--cover", required=True)
    sp.add_argument("--stego", required=True)

    # audio
    g = top.add_parser("audio", help="LSB hiding in 16-bit PCM WAV").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    sp = sub(g, "hide", cmd_audio_hide, "hide a file in WAV sample LSBs")
    sp.add_argument("--cover", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bits", type=_bits, default=1)
    sp.add_argument("--name", default=None)
    secret(sp)
    sp = sub(g, "extract", cmd_audio_extract, "recover a hidden file from a WAV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bits", type=_bits, default=1)
    secret(sp)
    sp = sub(g, "tone", cmd_audio_tone, "add amplitude*cos(pi*freq*n) to a WAV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--freq", type=float, default=0.4, help="omega/pi, default 0.4")
    sp.add_argument("--amplitude", type=float, default=1.0, help="relative to full scale")

    # spectrum
    g = top.add_parser("spectrum", help="power spectrum estimation").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)

    def est_opts(sp, allow_all=False):
        choices = spectral.METHODS + (("all",) if allow_all else ())
        sp.add_argument("--method", choices=choices, default="periodogram")
        sp.add_argument("--order", type=int, default=4)
        sp.add_argument("--nfft", type=int, default=1024)
        sp.add_argument("--max-lag", type=int, default=None)

    sp = sub(g, "estimate", cmd_spectrum_estimate, "spectrum of a WAV as CSV freq,power")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", default=None)
    est_opts(sp)
    sp = sub(g, "peak", cmd_spectrum_peak, "peak frequency (cycles/sample)")
    sp.add_argument("--in", dest="input", required=True)
    est_opts(sp, allow_all=True)
    sp = sub(g, "compare", cmd_spectrum_compare,
             "Monte-Carlo variance: periodogram vs Blackman-Tukey on white noise")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--max-lag", type=int, default=32)
    sp.add_argument("--nfft", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    # text
    g = top.add_parser("text", help="mimic-grammar text hiding").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    sp = sub(g, "encode", cmd_text_encode, "turn a file into mimic text")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--grammar", default=None)
    sp.add_argument("--name", default=None)
    secret(sp)
    sp = sub(g, "decode", cmd_text_decode, "recover a file from mimic text")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--grammar", default=None)
    secret(sp)
    sp = sub(g, "check-grammar", cmd_text_check, "validate a grammar file")
    sp.add_argument("--grammar", default=None)

    # vfs
    g = top.add_parser("vfs", help="virtual disk: slack space and named streams").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)

    def scope(sp):
        sp.add_argument("--root", default="")
        sp.add_argument("--levels", type=int, default=None)

    sp = sub(g, "format", cmd_vfs_format, "create an empty disk image")
    sp.add_argument("image")
    sp.add_argument("--clusters", type=int, default=1024)
    sp.add_argument("--sectors-per-cluster", type=int, default=4)
    sp = sub(g, "put", cmd_vfs_put, "copy a host file into the image")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--force", action="store_true", help="overwrite an existing file")
    sp = sub(g, "get", cmd_vfs_get, "copy a file out of the image")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("--out", required=True)
    sp = sub(g, "rm", cmd_vfs_rm, "delete a file (clusters keep their bytes)")
    sp.add_argument("image")
    sp.add_argument("path")
    sp = sub(g, "ls", cmd_vfs_ls, "list files")
    sp.add_argument("image")
    scope(sp)
    sp = sub(g, "raw", cmd_vfs_raw, "dump one cluster regardless of allocation")
    sp.add_argument("image")
    sp.add_argument("cluster", type=int)
    sp.add_argument("--out", required=True)
    sp = sub(g, "slack-map", cmd_vfs_slack_map, "list RAM and file slack extents")
    sp.add_argument("image")
    scope(sp)
    sp = sub(g, "slack-hide", cmd_vfs_slack_hide, "store a file in slack space")
    sp.add_argument("image")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--meta", required=True, help="metadata output file")
    sp.add_argument("--pass", dest="passphrase", required=True)
    sp.add_argument("--select", choices=vfs.SELECTIONS, default="dumb")
    sp.add_argument("--obfuscate", choices=("none", "random-key", "xor-file"), default="none")
    sp.add_argument("--xor-file", default=None)
    sp.add_argument("--seed", type=int, default=0)
    scope(sp)
    sp = sub(g, "slack-restore", cmd_vfs_slack_restore, "restore a file from slack space")
    sp.add_argument("image")
    sp.add_argument("--meta", required=True)
    sp.add_argument("--pass", dest="passphrase", required=True)
    sp.add_argument("--xor-file", default=None)
    sp.add_argument("--out", default=None,
                    help="output file; default is the original name, never overwritten")
    sp = sub(g, "ads-attach", cmd_vfs_ads_attach, "attach a named stream to a file")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("stream")
    sp.add_argument("--in", dest="input", required=True)
    sp = sub(g, "ads-read", cmd_vfs_ads_read, "read a named stream")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("stream")
    sp.add_argument("--out", required=True)
    sp = sub(g, "ads-scan", cmd_vfs_ads_scan, "enumerate named streams")
    sp.add_argument("image")
    scope(sp)
    sp = sub(g, "ads-remove", cmd_vfs_ads_remove, "delete a named stream")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("stream")
    sp = sub(g, "export", cmd_vfs_export,
             "copy a file out; without --with-streams its streams are dropped")
    sp.add_argument("image")
    sp.add_argument("path")
    sp.add_argument("--out", required=True)
    sp.add_argument("--with-streams", action="store_true")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except StegError as exc:
        print(f"stegkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


def main():
    sys.exit(run())
