"""Extract the benchmark CSVs under data/ from locally downloaded wheels.

The sandbox has no route to the UCI archive, so the tables are recovered from
packages on the pip mirror:

    pip download --no-deps -d wheels keel-ds orange3
    python scripts/prepare_data.py wheels

* zoo.csv       Orange3's bundled zoo.tab (animal name column dropped)
* glass.csv     KEEL's one-vs-rest glass0/1/4/5/6 files (identical row
                order) merged back into one multiclass table; rows positive in
                none of them are class 3. KEEL ships these variants with
                rescaled feature values, not the raw UCI measurements.
* pendigits.csv KEEL penbased
* letter.csv    KEEL letter
"""
import csv
import glob
import sys
import zipfile
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"


def _keel_rows(text):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("@"):
            rows.append([c.strip() for c in line.split(",")])
    return rows


def _write(name, header, rows):
    with open(OUT / name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"{name}: {len(rows)} rows, {len(header) - 1} features")


def main(wheel_dir):
    keel = zipfile.ZipFile(glob.glob(f"{wheel_dir}/keel_ds-*.whl")[0])
    orange = zipfile.ZipFile(glob.glob(f"{wheel_dir}/orange3-*.whl")[0])

    def keel_file(stem):
        (name,) = [n for n in keel.namelist() if n.endswith(f"/raw/{stem}.dat")]
        return _keel_rows(keel.read(name).decode())

    for stem, out in [("penbased", "pendigits.csv"), ("letter", "letter.csv")]:
        rows = keel_file(stem)
        header = [f"f{i}" for i in range(len(rows[0]) - 1)] + ["label"]
        _write(out, header, rows)

    base = keel_file("glass0")
    # class 3 is the only class with no one-vs-rest file whose rows line up
    labels = ["3"] * len(base)
    for cls, stem in [("1", "glass0"), ("2", "glass1"), ("5", "glass4"),
                      ("6", "glass5"), ("7", "glass6")]:
        rows = keel_file(stem)
        assert [r[:-1] for r in rows] == [r[:-1] for r in base]
        for i, r in enumerate(rows):
            if r[-1] == "positive":
                assert labels[i] == "3"
                labels[i] = cls
    rows = [r[:-1] + [lab] for r, lab in zip(base, labels)]
    header = ["RI", "Na", "Mg", "Al", "Si", "K", "Ca", "Ba", "Fe", "label"]
    _write("glass.csv", header, rows)

    (name,) = [n for n in orange.namelist() if n.endswith("datasets/zoo.tab")]
    lines = orange.read(name).decode().splitlines()
    cols = lines[0].split("\t")
    rows = [line.split("\t")[1:] for line in lines[3:] if line.strip()]
    _write("zoo.csv", cols[1:-1] + ["label"], rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "wheels")
