#!/usr/bin/env python3
"""Download the MNIST IDX files into ./data (or a directory you name).

Usage: python3 tools/fetch_mnist.py [dest_dir]

Tries a couple of long-lived mirrors and gunzips the four archives into
plain IDX files, which is what the engine and the benchmark CLI read.
Needs outbound network access; run it on a machine that has some.
"""

import gzip
import sys
import urllib.error
import urllib.request
from pathlib import Path

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)


def fetch_one(name: str, dest: Path) -> None:
    out = dest / name.removesuffix(".gz")
    if out.exists():
        print(f"{out} already present, skipping")
        return
    last_error: Exception | None = None
    for mirror in MIRRORS:
        url = mirror + name
        try:
            print(f"fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                payload = response.read()
            out.write_bytes(gzip.decompress(payload))
            print(f"wrote {out} ({out.stat().st_size} bytes)")
            return
        except (urllib.error.URLError, OSError) as exc:
            last_error = exc
            print(f"  failed: {exc}")
    raise SystemExit(f"all mirrors failed for {name}: {last_error}")


def main() -> None:
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    dest.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        fetch_one(name, dest)
    print("done; point DTSNN_DATA at the directory or keep the default ./data")


if __name__ == "__main__":
    main()
