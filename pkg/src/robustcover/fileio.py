"""File formats: network JSON, labelled CSV datasets and deterministic JSON reports."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .network import Network, activation


class ParseError(ValueError):
    """Malformed input file; ``line``/``column`` are 1-based when known."""

    def __init__(self, path, message, line=None, column=None):
        self.path, self.line, self.column = str(path), line, column
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


def _read_text(path):
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise ParseError(path, f"cannot read file ({exc.strerror})") from exc


def load_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.msg, exc.lineno, exc.colno) from exc


def network_from_dict(obj, path="<network>") -> Network:
    if not isinstance(obj, dict) or not isinstance(obj.get("layers"), list) or not obj["layers"]:
        raise ParseError(path, 'expected an object with a non-empty "layers" list')
    unknown = set(obj) - {"layers"}
    if unknown:
        raise ParseError(path, f"unknown top-level keys {sorted(unknown)}")
    weights, acts = [], []
    for i, layer in enumerate(obj["layers"]):
        where = f"layers[{i}]"
        if not isinstance(layer, dict) or "weights" not in layer:
            raise ParseError(path, f'{where}: expected an object with "weights"')
        extra = set(layer) - {"weights", "activation", "lipschitz", "slope"}
        if extra:
            raise ParseError(path, f"{where}: unknown keys {sorted(extra)}")
        rows = layer["weights"]
        if (not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows)
                or len({len(r) for r in rows}) != 1 or not rows[0]):
            raise ParseError(path, f"{where}.weights: expected a non-empty rectangular list of rows")
        try:
            W = np.array(rows, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(path, f"{where}.weights: non-numeric entry") from exc
        if not np.all(np.isfinite(W)):
            raise ParseError(path, f"{where}.weights: entries must be finite")
        try:
            acts.append(activation(layer.get("activation", "relu"), float(layer.get("slope", 0.0)),
                                   layer.get("lipschitz")))
        except (TypeError, ValueError) as exc:
            raise ParseError(path, f"{where}: {exc}") from exc
        weights.append(W)
    try:
        return Network(tuple(weights), tuple(acts))
    except ValueError as exc:
        raise ParseError(path, str(exc)) from exc


def network_to_dict(net: Network) -> dict:
    layers = []
    for W, act in zip(net.weights, net.activations):
        entry = {"weights": W.tolist(), "activation": act.kind, "lipschitz": act.lipschitz}
        if act.kind == "leaky_relu":
            entry["slope"] = act.slope
        layers.append(entry)
    return {"layers": layers}


def load_network(path) -> Network:
    return network_from_dict(load_json(path), path)


def save_network(net: Network, path):
    write_json(network_to_dict(net), path)


def load_dataset(path):
    """CSV rows ``x_1, ..., x_d, label``; an optional first header row is skipped.

    Returns ``(X (n, d), y (n,))``. Labels must be non-negative integers.
    """
    text = _read_text(path)
    rows = list(csv.reader(text.splitlines()))
    X, y, width = [], [], None
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and not _numeric(row[0]):
            continue  # header
        if len(row) < 2:
            raise ParseError(path, "need at least one feature and a label", lineno, 1)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(path, f"expected {width} fields, found {len(row)}", lineno,
                             min(len(row), width) + 1)
        feats = []
        for col, cell in enumerate(row[:-1], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(path, f"not a number: {cell.strip()!r}", lineno, col) from None
            if not math.isfinite(v):
                raise ParseError(path, "non-finite feature", lineno, col)
            feats.append(v)
        label = row[-1].strip()
        if not label.isdigit():
            raise ParseError(path, f"label must be a non-negative integer, got {label!r}", lineno, len(row))
        X.append(feats)
        y.append(int(label))
    if not X:
        raise ParseError(path, "no data rows")
    return np.array(X, dtype=np.float64), np.array(y, dtype=np.int64)


def _numeric(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def save_dataset(X, y, path, header=True):
    X = np.asarray(X, dtype=np.float64)
    lines = []
    if header:
        lines.append(",".join([f"x{i + 1}" for i in range(X.shape[1])] + ["label"]))
    for row, label in zip(X, y):
        lines.append(",".join([format(float(v), ".17g") for v in row] + [str(int(label))]))
    _atomic_write(path, "\n".join(lines) + "\n")


def _float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(x, ".17g")


def dumps(obj, indent=0) -> str:
    """JSON with sorted keys and floats printed to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(obj[k], indent + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    return json.dumps(str(obj))


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(obj, path):
    _atomic_write(path, dumps(obj) + "\n")
