"""Walk through slack hiding on a throwaway disk image.

Formats a disk, writes a few files, prints the slack map, hides a payload under
every selection/obfuscation pair, then overwrites a carrier to show detection.
"""

import argparse

import numpy as np

from stegkit import vfs
from stegkit.errors import IntegrityError


def build_disk():
    d = vfs.format_disk(32, 4)
    d.write_file("notes/todo.txt", b"buy milk\n" * 22)
    d.write_file("notes/archive/2019.log", b"x" * 5000)
    d.write_file("report.doc", bytes(1300))
    return d


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--payload-size", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    payload = np.random.default_rng(args.seed).bytes(args.payload_size)

    d = build_disk()
    print("path,cluster,offset,length,kind")
    for e in vfs.slack_map(d):
        print(f"{e.path},{e.cluster},{e.offset},{e.length},{e.kind}")
    total = sum(e.length for e in vfs.slack_map(d) if e.kind == "file_slack")
    print(f"file slack available: {total} bytes\n")

    for sel in vfs.SELECTIONS:
        for obf in vfs.OBFUSCATIONS:
            d = build_disk()
            key = b"shared key" if obf == "xor_file" else None
            meta = vfs.slack_hide(d, payload, "demo", sel, obf, args.seed, key)
            chunks = vfs.read_slack_metadata(meta, "demo")["chunks"]
            ok = vfs.slack_restore(d, meta, "demo", key) == payload
            order = " ".join(c["path"] for c in chunks)
            print(f"{sel:11s} {obf:10s} restored={ok}  chunks: {order}")

    d = build_disk()
    meta = vfs.slack_hide(d, payload, "demo")
    d.write_file("notes/todo.txt", bytes(2048), overwrite=True)
    try:
        vfs.slack_restore(d, meta, "demo")
    except IntegrityError as exc:
        print(f"\nafter overwriting notes/todo.txt: {exc}")


if __name__ == "__main__":
    main()
