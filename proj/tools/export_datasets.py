#!/usr/bin/env python3
"""Write the UCI tables used by the benchmarks into data/ as plain CSV.

Wine is taken from the copy bundled with scikit-learn. Ionosphere is taken
from the copy shipped inside the Orange3 wheel (pass --orange-wheel, or have
Orange3 installed). The output layout mirrors the UCI originals:

  wine.csv        class,f1..f13        (class in {1,2,3}, UCI order)
  ionosphere.csv  f1..f34,class        (class in {g,b})

SPECTF heart and Madelon are not bundled anywhere offline. Download them from
the UCI repository and convert with --spectf / --madelon-dir:

  SPECTF.train + SPECTF.test  -> spectf.csv   (class,f1..f44)
  madelon_{train,valid}.data + .labels -> madelon.csv (f1..f500,class)
"""
import argparse
import csv
import pathlib
import zipfile


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def export_wine(out):
    from sklearn.datasets import load_wine
    ds = load_wine()
    rows = [[int(t) + 1] + [repr(float(v)) for v in x] for x, t in zip(ds.data, ds.target)]
    write_rows(out / "wine.csv", ["class"] + [f"f{i + 1}" for i in range(13)], rows)


def read_ionosphere_tab(args):
    if args.orange_wheel:
        with zipfile.ZipFile(args.orange_wheel) as z:
            return z.read("Orange/tests/datasets/ionosphere.tab").decode()
    import Orange.tests  # noqa: F401
    base = pathlib.Path(Orange.tests.__file__).parent
    return (base / "datasets" / "ionosphere.tab").read_text()


def export_ionosphere(out, args):
    lines = read_ionosphere_tab(args).splitlines()[3:]
    rows = [line.split("\t") for line in lines if line.strip()]
    write_rows(out / "ionosphere.csv", [f"f{i + 1}" for i in range(34)] + ["class"], rows)


def export_spectf(out, parts):
    rows = []
    for p in parts:
        for line in pathlib.Path(p).read_text().splitlines():
            if line.strip():
                rows.append(line.strip().split(","))
    write_rows(out / "spectf.csv", ["class"] + [f"f{i + 1}" for i in range(44)], rows)


def export_madelon(out, src):
    src = pathlib.Path(src)
    rows = []
    for part in ("train", "valid"):
        feats = (src / f"madelon_{part}.data").read_text().splitlines()
        labels = (src / f"madelon_{part}.labels").read_text().split()
        for f, y in zip(feats, labels):
            rows.append(f.split() + [y])
    write_rows(out / "madelon.csv", [f"f{i + 1}" for i in range(500)] + ["class"], rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--orange-wheel")
    ap.add_argument("--spectf", nargs="*", help="SPECTF.train SPECTF.test")
    ap.add_argument("--madelon-dir")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_wine(out)
    export_ionosphere(out, args)
    if args.spectf:
        export_spectf(out, args.spectf)
    if args.madelon_dir:
        export_madelon(out, args.madelon_dir)


if __name__ == "__main__":
    main()
