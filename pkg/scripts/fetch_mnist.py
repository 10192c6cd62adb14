"""Put MNIST IDX files where ``fedsim.mnist.find_mnist`` looks for them.

With ``--from DIR`` the four standard archives (``*-ubyte.gz`` or already
unpacked) are copied into ``data/mnist``.  Without it, the 5,000 real digits
shipped with mlxtend are written to ``data/mnist-subset`` as a stand-in.

    python scripts/fetch_mnist.py
    python scripts/fetch_mnist.py --from ~/Downloads/mnist
"""

import argparse
import gzip
import shutil
from pathlib import Path

from fedsim import mnist


def copy_archives(src: Path, dst: Path) -> Path:
    dst.mkdir(parents=True, exist_ok=True)
    for name in mnist.FILES.values():
        plain, packed = src / name, src / f"{name}.gz"
        if plain.exists():
            shutil.copyfile(plain, dst / name)
        elif packed.exists():
            with gzip.open(packed, "rb") as fin, open(dst / name, "wb") as fout:
                shutil.copyfileobj(fin, fout)
        else:
            raise SystemExit(f"missing {name}(.gz) in {src}")
    return dst


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--from", dest="source", type=Path, help="directory holding the MNIST archives")
    parser.add_argument("--test-per-class", type=int, default=100, help="subset only: test digits per class")
    args = parser.parse_args()
    if args.source:
        out = copy_archives(args.source.expanduser(), mnist.REPO_DATA / "mnist")
    else:
        out = mnist.write_bundled_subset(mnist.REPO_DATA / "mnist-subset", args.test_per_class)
    train, test = mnist.load_mnist(out)
    print(f"{out}: {len(train)} train / {len(test)} test digits")


if __name__ == "__main__":
    main()
