"""Download MNIST, CIFAR-10 and STL-10 into the layout the loaders expect.

    python3 scripts/fetch_datasets.py [--root DIR] [mnist cifar10 stl10]

``--root`` defaults to ``$KERNSAT_DATA_DIR``. Archives are checked against
their published MD5 sums; ``--no-verify`` skips that check.
"""
import argparse
import hashlib
import os
import tarfile
import urllib.request
from pathlib import Path

MNIST_URL = "https://ossci-datasets.s3.amazonaws.com/mnist/"
SOURCES = {
    "mnist": [
        (MNIST_URL + "train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
        (MNIST_URL + "train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
        (MNIST_URL + "t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
        (MNIST_URL + "t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
    ],
    "cifar10": [("https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz", "c32a1d4ab5d03f1284b67883e8d87530")],
    "stl10": [("http://ai.stanford.edu/~acoates/stl10/stl10_binary.tar.gz", "91f7769df0f17e558f3565bffb0c7dfb")],
}


def md5(path, chunk=1 << 20):
    h = hashlib.md5()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


def fetch(url, dest: Path, checksum, verify=True):
    if dest.is_file() and (not verify or md5(dest) == checksum):
        print(f"have {dest}")
        return
    print(f"downloading {url}")
    tmp = dest.with_suffix(dest.suffix + ".part")
    urllib.request.urlretrieve(url, tmp)
    if verify and md5(tmp) != checksum:
        tmp.unlink()
        raise RuntimeError(f"checksum mismatch for {url}")
    tmp.replace(dest)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("datasets", nargs="*", default=list(SOURCES), choices=list(SOURCES))
    ap.add_argument("--root", default=os.environ.get("KERNSAT_DATA_DIR"))
    ap.add_argument("--no-verify", action="store_true")
    args = ap.parse_args(argv)
    if not args.root:
        ap.error("pass --root or set KERNSAT_DATA_DIR")
    root = Path(args.root)
    for name in args.datasets:
        target = root / "mnist" if name == "mnist" else root
        target.mkdir(parents=True, exist_ok=True)
        for url, checksum in SOURCES[name]:
            dest = target / url.rsplit("/", 1)[1]
            fetch(url, dest, checksum, not args.no_verify)
            if dest.suffixes[-2:] == [".tar", ".gz"]:
                print(f"extracting {dest.name}")
                with tarfile.open(dest) as tar:
                    if hasattr(tarfile, "data_filter"):
                        tar.extractall(root, filter="data")
                    else:
                        tar.extractall(root)
    print(f"datasets under {root}")


if __name__ == "__main__":
    main()
