"""Distortion of a cover image as the bit depth grows.

Embeds a full-capacity random payload at k = 1..8 and prints MSE, PSNR and
the fraction of channel bytes that changed. Pass --cover to use a real BMP.
"""

import argparse
from pathlib import Path

import numpy as np

from stegkit import bmp
from stegkit.payload import frame_payload


def main():
    ap = argparse.ArgumentParser(description="PSNR versus LSB depth")
    ap.add_argument("--cover", type=Path, default=None)
    ap.add_argument("--size", type=int, default=64, help="side of the random cover")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=None, help="CSV destination")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    if args.cover:
        cover = bmp.load_bmp(args.cover.read_bytes())
    else:
        cover = bmp.make_bmp(rng.integers(0, 256, (args.size, args.size, 3), dtype=np.uint8))

    rows = ["bits,payload_bytes,mse,psnr_db,changed_fraction"]
    for k in range(1, 9):
        room = bmp.capacity(cover, k) - 16
        if room < 0:
            continue
        stego = bmp.embed(cover, frame_payload(rng.bytes(room)), k)
        d = bmp.distortion(cover, stego)
        changed = float(np.mean(bmp.channel_bytes(cover) != bmp.channel_bytes(stego)))
        rows.append(f"{k},{room},{d.mse:.4f},{d.psnr_db:.3f},{changed:.4f}")

    text = "\n".join(rows) + "\n"
    if args.out:
        args.out.write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
