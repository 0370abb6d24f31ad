"""Loading multi-label datasets and making train/test splits.

Supported inputs are Mulan-style ARFF files (dense or sparse rows) paired with
the label-list XML, and a pair of plain CSV files (features, labels).
"""
from __future__ import annotations

import csv
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Base class for dataset loading problems."""


class ParseError(DatasetError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DatasetError):
    pass


class ValidationError(DatasetError):
    pass


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    Y: np.ndarray
    feature_names: list = field(default_factory=list)
    label_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y)
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise ValidationError("X and Y must be 2-d")
        n, d = self.X.shape
        if self.Y.shape[0] != n:
            raise ValidationError(f"X has {n} rows but Y has {self.Y.shape[0]}")
        c = self.Y.shape[1]
        if min(n, d, c) < 1:
            raise ValidationError(f"empty dataset (n={n}, d={d}, c={c})")
        if not np.all(np.isfinite(self.X)):
            raise ValidationError("X contains NaN or Inf")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            bad = self.Y[(self.Y != 0) & (self.Y != 1)].ravel()[0]
            raise ValidationError(f"label matrix must be binary, found {bad!r}")
        self.Y = self.Y.astype(np.int8)
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(d)]
        if not self.label_names:
            self.label_names = [f"y{j}" for j in range(c)]
        if len(self.feature_names) != d or len(self.label_names) != c:
            raise ValidationError("name lists do not match matrix widths")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def c(self):
        return self.Y.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.name, self.X[rows], self.Y[rows],
                       list(self.feature_names), list(self.label_names))


@dataclass(frozen=True)
class Split:
    train_indices: tuple
    test_indices: tuple
    train_fraction: float
    seed: int


# --------------------------------------------------------------------------
# ARFF

def _split_arff_tokens(text, lineno):
    """Split on commas/whitespace honouring single and double quotes."""
    tokens, buf, quote = [], [], None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            tokens.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    if quote:
        raise ParseError("unterminated quote", lineno)
    tokens.append("".join(buf).strip())
    return tokens


def _parse_attribute(rest, lineno):
    rest = rest.strip()
    if rest[:1] in "'\"":
        q = rest[0]
        end = rest.find(q, 1)
        if end < 0:
            raise ParseError("unterminated attribute name", lineno)
        name, kind = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"malformed @attribute: {rest!r}", lineno)
        name, kind = parts
    if kind.startswith("{"):
        if not kind.endswith("}"):
            raise ParseError("unterminated nominal value list", lineno)
        values = [v for v in _split_arff_tokens(kind[1:-1], lineno)]
        return name, "nominal", values
    low = kind.lower()
    if low in ("numeric", "real", "integer"):
        return name, "numeric", None
    if low == "string" or low.startswith("date"):
        return name, low.split()[0], None
    raise ParseError(f"unsupported attribute type {kind!r}", lineno)


def _arff_value(token, kind, nominal, lineno):
    if token in ("?", ""):
        raise ParseError("missing values are not supported", lineno)
    if kind == "numeric":
        try:
            return float(token)
        except ValueError:
            raise ParseError(f"non-numeric value {token!r}", lineno) from None
    if kind == "nominal":
        if token not in nominal:
            raise ParseError(f"value {token!r} not in nominal set {nominal}", lineno)
        try:
            return float(token)
        except ValueError:
            return float(nominal.index(token))
    raise ParseError(f"cannot convert {kind} attribute to a number", lineno)


def read_arff(path):
    """Parse an ARFF file into ``(relation, attributes, matrix)``.

    ``attributes`` is a list of ``(name, kind, nominal_values)``. Sparse rows
    (``{index value, ...}``) are expanded with zeros for omitted entries.
    """
    relation = None
    attributes = []
    rows = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                key = line.split(None, 1)[0].lower()
                if key == "@relation":
                    relation = line.split(None, 1)[1].strip().strip("'\"") if " " in line else ""
                elif key == "@attribute":
                    attributes.append(_parse_attribute(line.split(None, 1)[1], lineno))
                elif key == "@data":
                    if not attributes:
                        raise ParseError("@data before any @attribute", lineno)
                    in_data = True
                else:
                    raise ParseError(f"unexpected header line {line!r}", lineno)
                continue
            rows.append(_parse_arff_row(line, attributes, lineno))
    if not in_data:
        raise ParseError("no @data section")
    if not rows:
        raise ParseError("no data rows")
    return relation, attributes, np.array(rows, dtype=float)


def _parse_arff_row(line, attributes, lineno):
    m = len(attributes)
    if line.startswith("{"):
        if not line.endswith("}"):
            raise ParseError("unterminated sparse row", lineno)
        row = [0.0] * m
        body = line[1:-1].strip()
        if not body:
            return row
        for item in _split_arff_tokens(body, lineno):
            parts = item.split(None, 1)
            if len(parts) != 2:
                raise ParseError(f"malformed sparse entry {item!r}", lineno)
            try:
                idx = int(parts[0])
            except ValueError:
                raise ParseError(f"bad sparse index {parts[0]!r}", lineno) from None
            if not 0 <= idx < m:
                raise ParseError(f"sparse index {idx} out of range", lineno)
            _, kind, nominal = attributes[idx]
            row[idx] = _arff_value(parts[1].strip().strip("'\""), kind, nominal, lineno)
        return row
    tokens = _split_arff_tokens(line, lineno)
    if len(tokens) != m:
        raise ParseError(f"expected {m} values, got {len(tokens)}", lineno)
    return [_arff_value(t, kind, nominal, lineno)
            for t, (_, kind, nominal) in zip(tokens, attributes)]


def read_label_xml(path):
    """Label names from a Mulan XML file, in document order."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise ParseError(f"bad label XML: {exc}") from None
    names = [el.get("name") for el in root.iter() if el.tag.split("}")[-1] == "label"]
    if not names or any(nm is None for nm in names):
        raise SchemaError("label XML contains no <label name=...> elements")
    return names


def load_arff(data_path, labels_xml_path, name=None):
    """Load a Mulan dataset.

    Label columns follow the XML order; every other attribute becomes a
    feature column in ARFF order.
    """
    _, attributes, matrix = read_arff(data_path)
    labels = read_label_xml(labels_xml_path)
    index = {a[0]: i for i, a in enumerate(attributes)}
    missing = [lb for lb in labels if lb not in index]
    if missing:
        raise SchemaError(f"labels not found in ARFF: {missing}")
    label_cols = [index[lb] for lb in labels]
    label_set = set(label_cols)
    feat_cols = [i for i in range(len(attributes)) if i not in label_set]
    for i in feat_cols:
        if attributes[i][1] not in ("numeric", "nominal"):
            raise SchemaError(f"feature {attributes[i][0]!r} is not numeric")
    Y = matrix[:, label_cols]
    if not np.all((Y == 0) | (Y == 1)):
        raise ValidationError("label attributes must take values in {0, 1}")
    return Dataset(
        name=name or Path(data_path).stem,
        X=matrix[:, feat_cols],
        Y=Y.astype(np.int8),
        feature_names=[attributes[i][0] for i in feat_cols],
        label_names=labels,
    )


# --------------------------------------------------------------------------
# CSV

def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_csv_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = None
    if not all(_is_number(cell) for cell in rows[0]):
        header, rows = [cell.strip() for cell in rows[0]], rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    first = 2 if header else 1
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"{path}: expected {width} columns, got {len(r)}", i + first)
        for j, cell in enumerate(r):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r}", i + first) from None
    return header, out


def load_csv(features_path, labels_path, name=None):
    fnames, X = _read_csv_matrix(features_path)
    lnames, Y = _read_csv_matrix(labels_path)
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"row count mismatch: {X.shape[0]} features vs {Y.shape[0]} labels")
    return Dataset(
        name=name or Path(features_path).stem,
        X=X, Y=Y,
        feature_names=fnames or [],
        label_names=lnames or [],
    )


def save_csv(ds, features_path, labels_path):
    """Write a dataset as two CSV files with header rows.

    Values use ``repr`` so that reloading reproduces the floats exactly.
    """
    with open(features_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.feature_names)
        w.writerows([[repr(float(v)) for v in row] for row in ds.X])
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.label_names)
        w.writerows([[int(v) for v in row] for row in ds.Y])


# --------------------------------------------------------------------------
# Splits

def train_size(n, train_fraction):
    """Round-half-up of ``train_fraction * n`` (189 at 0.5 gives 95)."""
    return int(math.floor(train_fraction * n + 0.5))


def make_split(ds, train_fraction, seed):
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = ds if isinstance(ds, int) else ds.n
    perm = np.random.default_rng(seed).permutation(n)
    n_train = train_size(n, train_fraction)
    return Split(
        train_indices=tuple(int(i) for i in np.sort(perm[:n_train])),
        test_indices=tuple(int(i) for i in np.sort(perm[n_train:])),
        train_fraction=float(train_fraction),
        seed=int(seed),
    )


def minmax_scale(X_train, X_test=None):
    """Scale columns to [0, 1] using training statistics only.

    Constant columns map to 0. Test values outside the training range are
    clipped so downstream nonnegativity holds.
    """
    lo = X_train.min(axis=0)
    span = X_train.max(axis=0) - lo
    span[span == 0] = 1.0
    tr = (X_train - lo) / span
    if X_test is None:
        return tr
    te = np.clip((X_test - lo) / span, 0.0, 1.0)
    return tr, te
