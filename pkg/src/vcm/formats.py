"""File formats: JSON sequence objects, CSV matrices, atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .alignment import EmissionSequence, LogitSequence
from .concepts import ConceptSegments
from .errors import InvalidInput


def format_number(x: float, precision: int | None = None) -> str:
    """Shortest round-trip repr, or fixed decimals when ``precision`` is set."""
    x = float(x)
    if precision is None:
        return repr(x)
    text = f"{x:.{precision}f}"
    # avoid "-0.000" for tiny negatives
    return text[1:] if text.startswith("-") and float(text) == 0.0 else text


def matrix_to_csv(matrix, precision: int | None = None, header=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    for row in np.atleast_2d(matrix):
        writer.writerow(format_number(v, precision) for v in row)
    return buf.getvalue()


def lattice_csv(table, precision: int | None = None) -> str:
    """Rows are steps ``t = 1..M``, columns states ``l = 1..2L+1``."""
    table = np.atleast_2d(table)
    header = ["t"] + [f"l={l}" for l in range(1, table.shape[1] + 1)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for t, row in enumerate(table, start=1):
        writer.writerow([t] + [format_number(v, precision) for v in row])
    return buf.getvalue()


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV, one row per token; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidInput(f"{path}: no rows")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if data.ndim != 2:
        raise InvalidInput(f"{path}: rows have differing lengths")
    return data


def sequence_from_obj(obj):
    """Build an emission or logit sequence from ``{"probs": ...}`` or ``{"logits": ...}``."""
    if not isinstance(obj, dict):
        raise InvalidInput("sequence file must hold a JSON object")
    if "logits" in obj:
        return LogitSequence(np.asarray(obj["logits"], dtype=float))
    if "probs" in obj:
        return EmissionSequence(np.asarray(obj["probs"], dtype=float))
    raise InvalidInput("sequence object needs a 'probs' or 'logits' field")


def sequence_to_obj(seq) -> dict:
    if isinstance(seq, LogitSequence):
        return {"logits": seq.logits.tolist()}
    return {"probs": seq.probs.tolist()}


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc})") from None


def load_sequence(path):
    return sequence_from_obj(load_json(path))


def load_emissions(path) -> EmissionSequence:
    seq = load_sequence(path)
    return seq.emissions() if isinstance(seq, LogitSequence) else seq


def load_features(path) -> np.ndarray:
    """Features as a CSV matrix or a JSON object with a ``features`` field."""
    if str(path).endswith(".json"):
        obj = load_json(path)
        if not isinstance(obj, dict) or "features" not in obj:
            raise InvalidInput(f"{path}: expected an object with a 'features' field")
        return np.atleast_2d(np.asarray(obj["features"], dtype=float))
    return read_matrix_csv(path)


def segments_to_json(segments: ConceptSegments) -> str:
    return json.dumps(segments.to_dict(), indent=2) + "\n"


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_files(files: dict) -> None:
    """Write ``{path: text}`` so that either every file lands or none does.

    Each file is staged next to its target and renamed into place only after
    all of them were written.
    """
    staged = []
    try:
        for path, text in files.items():
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".vcm-", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
