"""Dataset ingestion and seeded stratified sampling.

Readers return a :class:`RawDataset` whose features are D x N (one sample
per column). Supported containers:

* IDX (the MNIST layout), optionally gzip-compressed;
* delimited text with one sample per row and a label column (USPS dumps
  such as ``zip.train``);
* sparse ``label index:value`` lines (the libsvm distribution of USPS).

A dataset *manifest* is an INI file naming the files and their format::

    [dataset]
    name = usps
    format = libsvm            ; idx | delimited | libsvm
    train = usps.bz2
    test = usps.t.bz2
    num_features = 256
    classes = 10
    rescale = minmax           ; minmax | none
    provenance = LIBSVM multiclass USPS (7291/2007 split)

Relative paths are resolved against the manifest's directory.
"""

import bz2
import configparser
import gzip
import io
import lzma
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nrc.classifier import LabeledDataset
from nrc.errors import (
    BadMagic,
    ClassTooSmall,
    DataError,
    NonNumericField,
    RaggedRow,
    TruncatedFile,
    UnsupportedElementType,
)

IDX_UBYTE = 0x08
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
# type codes defined by the IDX layout; only unsigned bytes are decoded
_IDX_KNOWN_TYPES = {0x08, 0x09, 0x0B, 0x0C, 0x0D, 0x0E}


@dataclass(frozen=True)
class RawDataset:
    features: np.ndarray
    labels: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] != len(self.labels):
            raise DataError(
                f"{len(self.labels)} labels for feature matrix of shape {self.features.shape}"
            )

    @property
    def n_samples(self):
        return self.features.shape[1]

    def to_labeled(self, classes=None):
        return LabeledDataset(self.features, self.labels, classes)


@dataclass(frozen=True)
class SplitSpec:
    per_class: int
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {self.per_class}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def _open_bytes(path):
    """Read a file, transparently decompressing gzip/bzip2/xz by magic bytes."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    if data[:3] == b"BZh":
        return bz2.decompress(data)
    if data[:6] == b"\xfd7zXZ\x00":
        return lzma.decompress(data)
    return data


# -- IDX ---------------------------------------------------------------------

def read_idx(path):
    """Parse an IDX file.

    A 1-D file (magic ``0x00000801``) is returned as an int64 label vector.
    Files with two or more dimensions (``0x00000803`` for image stacks) are
    returned as a float64 matrix with one flattened sample per column and
    pixel values scaled to [0, 1].
    """
    data = _open_bytes(path)
    if len(data) < 4:
        raise TruncatedFile(f"{path}: missing IDX header")
    zero, dtype_code, ndim = struct.unpack_from(">HBB", data)
    if zero != 0 or dtype_code not in _IDX_KNOWN_TYPES or ndim == 0:
        magic = struct.unpack_from(">I", data)[0]
        raise BadMagic(f"{path}: bad IDX magic 0x{magic:08X}")
    if dtype_code != IDX_UBYTE:
        raise UnsupportedElementType(f"{path}: IDX element type 0x{dtype_code:02X} is not uint8")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFile(f"{path}: IDX header declares {ndim} dims but file ends early")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - header < count:
        raise TruncatedFile(f"{path}: expected {count} payload bytes, found {len(data) - header}")
    payload = np.frombuffer(data, dtype=np.uint8, count=count, offset=header)
    if ndim == 1:
        return payload.astype(np.int64)
    flat = payload.reshape(dims[0], -1).astype(np.float64) / 255.0
    return np.asfortranarray(flat.T)


def write_idx(path, array):
    """Write a uint8 array in IDX layout (samples along the first axis)."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        if np.any((a < 0) | (a > 255)) or np.any(a != np.round(a)):
            raise ValueError("IDX writer only supports integer values in [0, 255]")
        a = a.astype(np.uint8)
    header = struct.pack(">HBB", 0, IDX_UBYTE, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(a).tobytes())


def load_idx_dataset(images_path, labels_path):
    X = read_idx(images_path)
    y = read_idx(labels_path)
    if X.ndim != 2 or y.ndim != 1:
        raise DataError(f"{images_path} must hold images and {labels_path} labels")
    if X.shape[1] != y.shape[0]:
        raise DataError(f"{X.shape[1]} images but {y.shape[0]} labels")
    return RawDataset(X, y, source=f"idx:{Path(images_path).name}+{Path(labels_path).name}")


# -- text formats ------------------------------------------------------------

def _text_lines(path):
    text = _open_bytes(path).decode("utf-8")
    return [(i + 1, ln) for i, ln in enumerate(io.StringIO(text)) if ln.strip()]


def read_delimited(path, label_column=0, delimiter=None):
    """Read one sample per row, features and label separated by ``delimiter``.

    ``delimiter=None`` splits on runs of whitespace. ``label_column`` may be
    negative (``-1`` for a trailing label). Labels that are whole numbers are
    returned as int64.
    """
    rows, labels = [], []
    width = None
    for lineno, line in _text_lines(path):
        fields = [f for f in (line.split(delimiter) if delimiter else line.split())]
        fields = [f.strip() for f in fields]
        if delimiter and fields and fields[-1] == "":
            fields = fields[:-1]
        if width is None:
            width = len(fields)
            if width < 2:
                raise RaggedRow(f"{path}:{lineno}: need a label and at least one feature")
        elif len(fields) != width:
            raise RaggedRow(f"{path}:{lineno}: expected {width} fields, found {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise NonNumericField(f"{path}:{lineno}: non-numeric field {bad!r}") from None
        labels.append(values.pop(label_column))
        rows.append(values)
    if not rows:
        return RawDataset(np.zeros((0, 0)), np.zeros(0, np.int64), source=f"delimited:{Path(path).name}")
    X = np.asfortranarray(np.array(rows, dtype=np.float64).T)
    return RawDataset(X, _labels_array(labels), source=f"delimited:{Path(path).name}")


def read_libsvm(path, num_features=None):
    """Read ``label idx:value ...`` lines (1-based indices) into a dense matrix."""
    labels, entries = [], []
    max_index = 0
    for lineno, line in _text_lines(path):
        parts = line.split()
        try:
            labels.append(float(parts[0]))
            pairs = []
            for tok in parts[1:]:
                k, v = tok.split(":", 1)
                pairs.append((int(k), float(v)))
        except ValueError:
            raise NonNumericField(f"{path}:{lineno}: cannot parse {line.strip()[:60]!r}") from None
        if any(k < 1 for k, _ in pairs):
            raise DataError(f"{path}:{lineno}: feature indices are 1-based")
        if pairs:
            max_index = max(max_index, max(k for k, _ in pairs))
        entries.append(pairs)
    D = num_features or max_index
    if max_index > D:
        raise RaggedRow(f"{path}: feature index {max_index} exceeds num_features={D}")
    X = np.zeros((D, len(entries)), order="F")
    for j, pairs in enumerate(entries):
        for k, v in pairs:
            X[k - 1, j] = v
    return RawDataset(X, _labels_array(labels), source=f"libsvm:{Path(path).name}")


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _labels_array(values):
    arr = np.array(values, dtype=np.float64)
    if arr.size and np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr


def rescale_unit_interval(raw, lo=None, hi=None):
    """Affinely map feature values from ``[lo, hi]`` (default: data range) to [0, 1]."""
    X = raw.features
    if X.size == 0:
        return raw
    lo = float(X.min()) if lo is None else lo
    hi = float(X.max()) if hi is None else hi
    if hi <= lo:
        raise DataError("cannot rescale constant features")
    return RawDataset(np.asfortranarray((X - lo) / (hi - lo)), raw.labels, raw.source)


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    name: str
    format: str
    train: Path
    test: Path | None = None
    train_labels: Path | None = None
    test_labels: Path | None = None
    label_column: int = 0
    delimiter: str | None = None
    num_features: int | None = None
    classes: int | None = None
    rescale: str = "none"
    provenance: str = ""
    path: Path | None = None


def read_manifest(path):
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise DataError(f"cannot read manifest {path}")
    if "dataset" not in cp:
        raise DataError(f"{path}: missing [dataset] section")
    sec = cp["dataset"]
    base = path.parent

    def p(key):
        v = sec.get(key, "").strip()
        return (base / v) if v else None

    fmt = sec.get("format", "").strip().lower()
    if fmt not in ("idx", "delimited", "libsvm"):
        raise DataError(f"{path}: format must be idx, delimited or libsvm, got {fmt!r}")
    if p("train") is None:
        raise DataError(f"{path}: 'train' is required")
    rescale = sec.get("rescale", "minmax" if fmt != "idx" else "none").strip().lower()
    if rescale not in ("minmax", "none"):
        raise DataError(f"{path}: rescale must be minmax or none")
    delim = sec.get("delimiter", "").strip() or None
    if delim == "tab":
        delim = "\t"
    try:
        return Manifest(
            name=sec.get("name", path.stem).strip(),
            format=fmt,
            train=p("train"),
            test=p("test"),
            train_labels=p("train_labels"),
            test_labels=p("test_labels"),
            label_column=sec.getint("label_column", 0),
            delimiter=delim,
            num_features=sec.getint("num_features", None),
            classes=sec.getint("classes", None),
            rescale=rescale,
            provenance=sec.get("provenance", "").strip(),
            path=path,
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_one(m, features_path, labels_path):
    if m.format == "idx":
        if labels_path is None:
            raise DataError(f"{m.path}: idx format needs a labels file for {features_path}")
        return load_idx_dataset(features_path, labels_path)
    if m.format == "libsvm":
        return read_libsvm(features_path, m.num_features)
    return read_delimited(features_path, m.label_column, m.delimiter)


def load_manifest_data(manifest):
    """Load ``(train, test_or_None)`` raw datasets described by a manifest.

    With ``rescale = minmax`` both splits are mapped to [0, 1] using the
    training split's value range.
    """
    m = manifest if isinstance(manifest, Manifest) else read_manifest(manifest)
    train = _load_one(m, m.train, m.train_labels)
    test = _load_one(m, m.test, m.test_labels) if m.test is not None else None
    if test is not None and train.n_samples and test.n_samples \
            and train.features.shape[0] != test.features.shape[0]:
        raise DataError(
            f"train has {train.features.shape[0]} features, test has {test.features.shape[0]}"
        )
    if m.rescale == "minmax" and train.n_samples:
        lo, hi = float(train.features.min()), float(train.features.max())
        train = rescale_unit_interval(train, lo, hi)
        if test is not None:
            test = rescale_unit_interval(test, lo, hi)
    if m.classes is not None:
        n = len(np.unique(train.labels))
        if n != m.classes:
            raise DataError(f"manifest declares {m.classes} classes, training data has {n}")
    return train, test


# -- sampling ----------------------------------------------------------------

def sampling_keys(seed, trial, n):
    """Raw 64-bit sort keys for ``n`` samples.

    The stream is Philox4x64-10 with key words ``(seed, trial)``. Block ``b``
    (``b = 1, 2, ...``) encrypts the 256-bit counter ``(b, 0, 0, 0)`` and
    yields four 64-bit words; concatenated, they are the keys of samples
    0, 1, 2, ... Philox is a counter-based generator with published
    known-answer vectors, so the keys do not depend on the numpy version or
    platform.
    """
    bg = np.random.Philox(key=np.array([seed, trial], dtype=np.uint64),
                          counter=np.zeros(4, dtype=np.uint64))
    return bg.random_raw(n)


def stratified_sample(data, spec, trial=0):
    """Draw ``spec.per_class`` training samples per class without replacement.

    Within each class the samples with the smallest :func:`sampling_keys`
    (ties broken by position) are taken. Both returned datasets keep the
    input column order.

    Returns
    -------
    train, remainder : LabeledDataset
    """
    if isinstance(data, RawDataset):
        data = data.to_labeled()
    if data.n_samples == 0:
        raise ClassTooSmall("dataset is empty")
    keys = sampling_keys(spec.seed, trial, data.n_samples)
    chosen = np.zeros(data.n_samples, dtype=bool)
    for k, cols in enumerate(data.class_index()):
        if cols.size < spec.per_class:
            raise ClassTooSmall(
                f"class {data.classes[k]!r} has {cols.size} samples, "
                f"{spec.per_class} requested"
            )
        order = np.lexsort((cols, keys[cols]))
        chosen[cols[order[:spec.per_class]]] = True
    return data.subset(np.flatnonzero(chosen)), data.subset(np.flatnonzero(~chosen))


def stratified_folds(data, n_folds, seed=0):
    """Assign every column to one of ``n_folds`` folds, balanced within each class.

    Each class is ordered by :func:`sampling_keys` (keyed by ``seed`` and the
    reserved trial id ``2**63``) and dealt round-robin into folds.
    """
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    keys = sampling_keys(seed, 2**63, data.n_samples)
    fold = np.empty(data.n_samples, dtype=np.int64)
    for k, cols in enumerate(data.class_index()):
        if cols.size < n_folds:
            raise ClassTooSmall(
                f"class {data.classes[k]!r} has {cols.size} samples, fewer than {n_folds} folds"
            )
        order = cols[np.lexsort((cols, keys[cols]))]
        fold[order] = np.arange(order.size) % n_folds
    return fold
