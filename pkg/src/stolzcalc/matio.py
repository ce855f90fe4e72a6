"""Text formats for matrices, vectors and experiment configs.

Matrix files: one header line ``n p``, then n rows of n complex tokens in
Python literal form (``re+imj``).  Vector files use the same header with a
single row.  Configs are TOML with sections domain / operator / params /
output; dotted-key overrides come from the CLI.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .geometry import UnimodularVertexSet
from .operators import FiniteOperator


class FormatError(ValueError):
    pass


def _p_str(p: float) -> str:
    if p == math.inf:
        return "inf"
    if float(p).is_integer():
        return str(int(p))
    return repr(p)


def _parse_p(tok: str) -> float:
    if tok.lower() in ("inf", "infinity"):
        return math.inf
    p = float(tok)
    if not 1.0 <= p:
        raise FormatError(f"ambient exponent must be >= 1, got {tok}")
    return p


def _ctok(z: complex) -> str:
    return f"{float(z.real)!r}{float(z.imag):+}j"


def save_matrix(path, T: FiniteOperator) -> None:
    lines = [f"{T.dim} {_p_str(T.p)}"]
    for row in T.matrix:
        lines.append(" ".join(_ctok(z) for z in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path) -> FiniteOperator:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        n_tok, p_tok = lines[0].split()
        n = int(n_tok)
        p = _parse_p(p_tok)
    except (ValueError, IndexError) as e:
        raise FormatError(f"bad header line {lines[0]!r}: expected 'n p'") from e
    if len(lines) != n + 1:
        raise FormatError(f"expected {n} rows after the header, found {len(lines) - 1}")
    rows = []
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != n:
            raise FormatError(f"expected {n} entries per row, found {len(toks)}")
        try:
            rows.append([complex(t) for t in toks])
        except ValueError as e:
            raise FormatError(f"bad complex token in row {ln!r}") from e
    return FiniteOperator(np.array(rows), p)


def save_vector(path, x, p: float) -> None:
    x = np.asarray(x, dtype=complex)
    lines = [f"{len(x)} {_p_str(p)}", " ".join(_ctok(z) for z in x)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_vector(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    n_tok, p_tok = lines[0].split()
    n, p = int(n_tok), _parse_p(p_tok)
    toks = lines[1].split()
    if len(toks) != n:
        raise FormatError(f"expected {n} entries, found {len(toks)}")
    return np.array([complex(t) for t in toks]), p


def vertices_from_config(value) -> UnimodularVertexSet:
    """Vertex set from a list of [re, im] pairs (counterclockwise)."""
    try:
        pts = [complex(float(re), float(im)) for re, im in value]
    except (TypeError, ValueError) as e:
        raise FormatError(
            f"domain.vertices must be a list of [re, im] pairs, got {value!r}"
        ) from e
    return UnimodularVertexSet(pts)


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_coerce(t.strip()) for t in inner.split(",")] if inner else []
    return text


def apply_override(cfg: dict, spec: str) -> None:
    """Apply one ``a.b.c=value`` override in place."""
    if "=" not in spec:
        raise FormatError(f"override {spec!r} must look like key.path=value")
    key, _, raw = spec.partition("=")
    parts = key.strip().split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise FormatError(f"override path {key!r} crosses a non-table value")
    node[parts[-1]] = _coerce(raw.strip())


def load_config(path=None, overrides=()) -> dict:
    cfg: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    for spec in overrides:
        apply_override(cfg, spec)
    return cfg
