#!/usr/bin/env python3
"""Build the benchmark CSVs used by the acceptance suite.

The raw files ship inside a few PyPI packages, which keeps the download
reproducible through any pip mirror:

    auto-mpg.csv  vega_datasets 0.9.0   (vega_datasets/_data/cars.json)
    heart.csv     orange3 3.39.0        (Orange/datasets/heart_disease.tab)
    compas.csv    responsibly 0.1.2     (compas-scores-two-years.csv)

Usage: python3 scripts/fetch_datasets.py [--out data] [--wheels DIR]
"""

import argparse
import csv
import io
import json
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

PACKAGES = {
    "vega_datasets": "vega_datasets==0.9.0",
    "orange3": "orange3==3.39.0",
    "responsibly": "responsibly==0.1.2",
}


def wheel(wheels: Path, key: str) -> zipfile.ZipFile:
    found = sorted(wheels.glob(f"{key}-*.whl"))
    if not found:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
             "-d", str(wheels), PACKAGES[key]],
            check=True,
        )
        found = sorted(wheels.glob(f"{key}-*.whl"))
    return zipfile.ZipFile(found[-1])


def write_csv(path: Path, header, rows):
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"{path}: {len(rows)} rows, {len(header)} columns")


def auto_mpg(wheels: Path, out: Path):
    # The vega copy is the UCI "original" file: 406 cars, 8 without mpg.
    # Dropping those gives the usual 398-row auto-mpg.data.
    cars = json.loads(wheel(wheels, "vega_datasets").read("vega_datasets/_data/cars.json"))
    origin = {"USA": 1, "Europe": 2, "Japan": 3}
    rows = []
    for c in cars:
        if c["Miles_per_Gallon"] is None:
            continue
        hp = c["Horsepower"]
        rows.append([
            c["Miles_per_Gallon"], c["Cylinders"], c["Displacement"],
            "?" if hp is None else hp, c["Weight_in_lbs"], c["Acceleration"],
            int(c["Year"][:4]) - 1900, origin[c["Origin"]], c["Name"],
        ])
    assert len(rows) == 398, len(rows)
    assert sum(r[3] == "?" for r in rows) == 6
    header = ["mpg", "cylinders", "displacement", "horsepower", "weight",
              "acceleration", "model_year", "origin", "car_name"]
    write_csv(out / "auto-mpg.csv", header, rows)


def heart(wheels: Path, out: Path):
    # Orange stores the Cleveland file with text labels; map them back to
    # the UCI integer codes.
    text = wheel(wheels, "orange3").read("Orange/datasets/heart_disease.tab").decode()
    lines = text.splitlines()[3:]
    codes = {
        "gender": {"male": 1, "female": 0},
        "chest pain": {"typical ang": 1, "atypical ang": 2, "non-anginal": 3, "asymptomatic": 4},
        "rest ECG": {"normal": 0, "ST-T abnormal": 1, "left vent hypertrophy": 2},
        "slope peak exc ST": {"upsloping": 1, "flat": 2, "downsloping": 3},
        "thal": {"normal": 3, "fixed defect": 6, "reversable defect": 7},
    }
    source = ["age", "gender", "chest pain", "rest SBP", "cholesterol",
              "fasting blood sugar > 120", "rest ECG", "max HR", "exerc ind ang",
              "ST by exercise", "slope peak exc ST", "major vessels colored", "thal",
              "diameter narrowing"]
    header = ["age", "sex", "cp", "trestbps", "chol", "fbs", "restecg", "thalach",
              "exang", "oldpeak", "slope", "ca", "thal", "target"]
    rows = []
    for line in lines:
        cells = line.split("\t")
        row = []
        for name, v in zip(source, cells):
            row.append(v if v == "?" or name not in codes else codes[name][v])
        rows.append(row)
    assert len(rows) == 303, len(rows)
    write_csv(out / "heart.csv", header, rows)


def compas(wheels: Path, out: Path):
    raw = wheel(wheels, "responsibly").read(
        "responsibly/dataset/compas/compas-scores-two-years.csv").decode()
    header = ["age", "sex", "c_charge_degree", "race", "priors_count",
              "juv_fel_count", "juv_misd_count", "juv_other_count", "two_year_recid"]
    rows = []
    for r in csv.DictReader(io.StringIO(raw)):
        # the usual ProPublica filtering
        if r["days_b_screening_arrest"] == "" or abs(int(float(r["days_b_screening_arrest"]))) > 30:
            continue
        if r["is_recid"] == "-1" or r["c_charge_degree"] == "O" or r["score_text"] == "N/A":
            continue
        rows.append([
            r["age"], 1 if r["sex"] == "Male" else 0, 1 if r["c_charge_degree"] == "F" else 0,
            r["race"], r["priors_count"], r["juv_fel_count"], r["juv_misd_count"],
            r["juv_other_count"], r["two_year_recid"],
        ])
    assert len(rows) == 6172, len(rows)
    write_csv(out / "compas.csv", header, rows)


def main():
    root = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=root / "data")
    ap.add_argument("--wheels", type=Path, default=None, help="directory with already downloaded wheels")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheels = args.wheels or Path(tmp)
        auto_mpg(wheels, args.out)
        heart(wheels, args.out)
        compas(wheels, args.out)


if __name__ == "__main__":
    main()
