#!/usr/bin/env python3
"""Download and normalize the two UCI benchmark datasets.

Run on a machine with network access:

    python3 scripts/fetch_uci_data.py --out data/

Writes adult.csv / adult.schema.json and german.csv / german.schema.json in
the layout farconvae's tabular loader expects. Normalization:

  adult:  train and test files concatenated; rows with any '?' cell dropped
          (leaving 45,222 rows); income binarized at 50K (>50K -> 1); the
          sensitive attribute is sex.
  german: the space-separated statlog file; personal-status codes collapse to
          sex (A91/A93/A94 -> male, A92/A95 -> female), which is the
          sensitive attribute; class 1 (good credit) -> 1, class 2 -> 0.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import urllib.request

import pandas as pd

UCI_ROOT = "https://archive.ics.uci.edu/ml/machine-learning-databases"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]
ADULT_CONTINUOUS = [
    "age", "fnlwgt", "education_num", "capital_gain", "capital_loss", "hours_per_week",
]

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount",
    "savings_status", "employment", "installment_commitment", "personal_status",
    "other_parties", "residence_since", "property_magnitude", "age",
    "other_payment_plans", "housing", "existing_credits", "job",
    "num_dependents", "own_telephone", "foreign_worker", "class",
]
GERMAN_CONTINUOUS = [
    "duration", "credit_amount", "installment_commitment", "residence_since",
    "age", "existing_credits", "num_dependents",
]
GERMAN_SEX = {"A91": "male", "A93": "male", "A94": "male", "A92": "female", "A95": "female"}


def _download(url: str) -> str:
    print(f"fetching {url}", file=sys.stderr)
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8", errors="strict")


def normalize_adult(train_text: str, test_text: str) -> pd.DataFrame:
    """Concatenate the two raw files, drop '?' rows, binarize income."""
    def parse(text: str) -> pd.DataFrame:
        clean = "\n".join(
            line for line in text.splitlines()
            if line.strip() and not line.startswith("|")
        )
        return pd.read_csv(
            io.StringIO(clean), header=None, names=ADULT_COLUMNS,
            skipinitialspace=True, dtype=str,
        )

    frame = pd.concat([parse(train_text), parse(test_text)], ignore_index=True)
    # the test file suffixes income labels with a period
    frame["income"] = frame["income"].str.rstrip(".")
    frame = frame[~(frame == "?").any(axis=1)].reset_index(drop=True)
    frame["income"] = (frame["income"] == ">50K").astype(int).astype(str)
    return frame


def normalize_german(text: str) -> pd.DataFrame:
    frame = pd.read_csv(
        io.StringIO(text), sep=r"\s+", header=None, names=GERMAN_COLUMNS, dtype=str
    )
    unknown = set(frame["personal_status"]) - set(GERMAN_SEX)
    if unknown:
        raise ValueError(f"unknown personal-status codes: {sorted(unknown)}")
    frame = frame.rename(columns={"personal_status": "sex"})
    frame["sex"] = frame["sex"].map(GERMAN_SEX)
    frame["class"] = (frame["class"] == "1").astype(int).astype(str)
    return frame


def _schema(frame: pd.DataFrame, continuous: list[str], sensitive: str, target: str) -> dict:
    columns = []
    for name in frame.columns:
        if name in (sensitive, target):
            kind = "binary"
        elif name in continuous:
            kind = "continuous"
        else:
            kind = "categorical"
        columns.append({"name": name, "kind": kind})
    return {"columns": columns, "sensitive": sensitive, "target": target}


def _write(frame: pd.DataFrame, schema: dict, out_dir: str, stem: str) -> None:
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    schema_path = os.path.join(out_dir, f"{stem}.schema.json")
    frame.to_csv(csv_path, index=False)
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path} ({len(frame)} rows) and {schema_path}", file=sys.stderr)


def fetch_adult(out_dir: str) -> None:
    train = _download(f"{UCI_ROOT}/adult/adult.data")
    test = _download(f"{UCI_ROOT}/adult/adult.test")
    frame = normalize_adult(train, test)
    if len(frame) != 45_222:
        print(f"warning: expected 45222 complete rows, got {len(frame)}", file=sys.stderr)
    _write(frame, _schema(frame, ADULT_CONTINUOUS, "sex", "income"), out_dir, "adult")


def fetch_german(out_dir: str) -> None:
    text = _download(f"{UCI_ROOT}/statlog/german/german.data")
    frame = normalize_german(text)
    if len(frame) != 1000:
        print(f"warning: expected 1000 rows, got {len(frame)}", file=sys.stderr)
    _write(frame, _schema(frame, GERMAN_CONTINUOUS, "sex", "class"), out_dir, "german")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory (default: data/)")
    parser.add_argument(
        "--dataset", choices=("adult", "german", "both"), default="both",
        help="which dataset to fetch",
    )
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    if args.dataset in ("adult", "both"):
        fetch_adult(args.out)
    if args.dataset in ("german", "both"):
        fetch_german(args.out)


if __name__ == "__main__":
    main()
