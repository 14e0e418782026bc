#!/usr/bin/env python3
"""Convert an N x D array dump (.npy or .npz) into an RFEV feature cache.

Typical use: features from a trained Inception, SwAV or CLIP model computed
with another toolkit and saved with numpy.save.

    python3 scripts/npy_to_rfev.py feats.npy feats.rfev --extractor inception-v3 --tap pool3

For .npz inputs, --key selects the array (default: the first one).
Values are cast to little-endian float32 and must be finite.
"""

import argparse
import json
import struct
import sys

import numpy as np


def encode(array, meta):
    if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] == 0:
        raise ValueError(f"expected a non-empty N x D array, got shape {array.shape}")
    data = np.ascontiguousarray(array, dtype="<f4")
    if not np.isfinite(data).all():
        raise ValueError("array contains NaN or Inf")
    n, d = data.shape
    meta_bytes = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [
            b"RFEV",
            struct.pack("<HIQ", 1, d, n),
            data.tobytes(order="C"),
            struct.pack("<I", len(meta_bytes)),
            meta_bytes,
        ]
    )


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--key", help="array name inside an .npz archive")
    p.add_argument("--extractor", default="external")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tap", default="final")
    p.add_argument("--preprocessing", default="")
    p.add_argument("--dataset", default="")
    args = p.parse_args(argv)

    loaded = np.load(args.input)
    if isinstance(loaded, np.lib.npyio.NpzFile):
        key = args.key or loaded.files[0]
        array = loaded[key]
    else:
        array = loaded

    meta = {
        "extractor": args.extractor,
        "seed": args.seed,
        "tap": args.tap,
        "preprocessing": args.preprocessing,
        "dataset": args.dataset,
    }
    with open(args.output, "wb") as f:
        f.write(encode(array, meta))
    return 0


if __name__ == "__main__":
    sys.exit(main())
