#!/usr/bin/env python3
"""Download the UCI Auto MPG data and write it as a headed CSV.

Missing horsepower values stay as "?" so that loaders can treat them as a
missing-value sentinel.

    python3 scripts/fetch_auto_mpg.py data/auto-mpg.csv
"""

import argparse
import csv
import shlex
import urllib.request
from pathlib import Path

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/auto-mpg/auto-mpg.data"
COLUMNS = [
    "mpg",
    "cylinders",
    "displacement",
    "horsepower",
    "weight",
    "acceleration",
    "model_year",
    "origin",
]


def parse(text):
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        # Eight whitespace-separated numbers followed by a quoted car name.
        fields = shlex.split(line)
        rows.append(fields[: len(COLUMNS)])
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", type=Path)
    parser.add_argument("--source", help="local copy of auto-mpg.data instead of downloading")
    args = parser.parse_args()

    if args.source:
        text = Path(args.source).read_text()
    else:
        with urllib.request.urlopen(URL, timeout=60) as response:
            text = response.read().decode("utf-8")
    rows = parse(text)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    missing = sum(1 for r in rows if "?" in r)
    print(f"wrote {len(rows)} rows ({missing} with missing values) to {args.out}")


if __name__ == "__main__":
    main()
