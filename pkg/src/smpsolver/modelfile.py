"""Reading and writing model files.

A model file is a JSON document::

    {
      "schema_version": 1,
      "states": ["A", "B"],
      "defaults": {"f1": "weibull(2, 1)"},
      "transitions": [
        {"from": "A", "to": "B", "prob": "1.0", "dist": "f1"}
      ]
    }

``dist`` is either a name from ``defaults`` or a literal:
``weibull(gamma, theta)``, ``exponential(rate)`` or ``empirical("file.csv")``
(path relative to the model file).  Probabilities may be JSON numbers or
decimal strings.  ``row_sum_tolerance`` optionally relaxes the row-sum check.
"""

from __future__ import annotations

import ast
import json
import re
from pathlib import Path

import numpy as np

from .distributions import Empirical, Exponential, WaitingTimeDistribution, Weibull
from .errors import ModelValidationError, SmpError
from .model import ROW_SUM_TOL, SmpModel, validate

__all__ = ["ModelFileError", "parse_model", "parse_model_text", "parse_distribution", "dump_model"]

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "states", "defaults", "transitions", "row_sum_tolerance", "description"}
TRANSITION_KEYS = {"from", "to", "prob", "dist"}

EXIT_IO = 2
EXIT_SYNTAX = 3
EXIT_INVALID = 4

_LITERAL = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$", re.S)


class ModelFileError(SmpError):
    def __init__(self, diagnostics, exit_code):
        self.diagnostics = list(diagnostics)
        self.exit_code = exit_code
        super().__init__("\n".join(self.diagnostics))


def parse_distribution(text: str, base_dir: Path | None = None) -> WaitingTimeDistribution:
    """Turn a literal such as ``weibull(2.2, 14541.6)`` into a distribution."""
    m = _LITERAL.match(text)
    if not m:
        raise ValueError(f"not a distribution literal: {text!r}")
    name, raw_args = m.group(1).lower(), m.group(2)
    try:
        args = ast.literal_eval(f"({raw_args},)") if raw_args.strip() else ()
    except (SyntaxError, ValueError):
        raise ValueError(f"cannot parse arguments of {text!r}") from None
    if name == "weibull":
        _expect(args, 2, text, (int, float))
        return Weibull(float(args[0]), float(args[1]))
    if name == "exponential":
        _expect(args, 1, text, (int, float))
        return Exponential(float(args[0]))
    if name == "empirical":
        _expect(args, 1, text, (str,))
        path = Path(args[0])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return Empirical.from_csv(path)
    raise ValueError(f"unknown distribution family {name!r}")


def _expect(args, count, text, types):
    if len(args) != count or not all(isinstance(a, types) and not isinstance(a, bool) for a in args):
        raise ValueError(f"{text!r}: expected {count} argument(s) of type {types[0].__name__}")


def _transition_lines(text: str) -> list[int]:
    """Line number of each element of the ``transitions`` array, best effort."""
    m = re.search(r'"transitions"\s*:\s*\[', text)
    if not m:
        return []
    decoder = json.JSONDecoder()
    pos, lines = m.end(), []
    while True:
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            return lines
        try:
            _, end = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            return lines
        lines.append(text.count("\n", 0, pos) + 1)
        pos = end


def _number(value, what):
    if isinstance(value, bool):
        raise ValueError(f"{what}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ValueError(f"{what}: expected a number, got {value!r}")


def parse_model_text(text: str, base_dir: Path | None = None, *, tolerance: float | None = None) -> SmpModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"], EXIT_SYNTAX) from None
    if not isinstance(doc, dict):
        raise ModelFileError(["top level must be a JSON object"], EXIT_SYNTAX)

    problems: list[str] = []
    unknown = set(doc) - TOP_KEYS
    if unknown:
        problems.append(f"unknown keys: {', '.join(sorted(unknown))}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"unsupported schema_version {version!r}")

    states = doc.get("states")
    if not isinstance(states, list) or not states or not all(isinstance(s, str) for s in states):
        raise ModelFileError(problems + ["'states' must be a nonempty list of names"], EXIT_INVALID)
    n = len(states)
    index = {s: i for i, s in enumerate(states)}

    aliases: dict[str, WaitingTimeDistribution] = {}
    defaults = doc.get("defaults", {})
    if not isinstance(defaults, dict):
        problems.append("'defaults' must be an object")
        defaults = {}
    for name, literal in defaults.items():
        try:
            aliases[name] = parse_distribution(str(literal), base_dir)
        except (ValueError, OSError) as exc:
            problems.append(f"defaults.{name}: {exc}")

    if tolerance is None:
        try:
            tolerance = _number(doc.get("row_sum_tolerance", ROW_SUM_TOL), "row_sum_tolerance")
        except ValueError as exc:
            problems.append(str(exc))
            tolerance = ROW_SUM_TOL

    transitions = doc.get("transitions", [])
    if not isinstance(transitions, list):
        raise ModelFileError(problems + ["'transitions' must be a list"], EXIT_INVALID)
    lines = _transition_lines(text)
    where_of: dict[tuple[str, str], str] = {}
    p = np.zeros((n, n))
    dists: list[list[WaitingTimeDistribution | None]] = [[None] * n for _ in range(n)]
    for k, tr in enumerate(transitions):
        where = f"line {lines[k]}" if k < len(lines) else f"transition #{k + 1}"
        if not isinstance(tr, dict):
            problems.append(f"{where}: transition must be an object")
            continue
        extra = set(tr) - TRANSITION_KEYS
        if extra:
            problems.append(f"{where}: unknown keys {', '.join(sorted(extra))}")
        missing = TRANSITION_KEYS - set(tr)
        if missing:
            problems.append(f"{where}: missing keys {', '.join(sorted(missing))}")
            continue
        a, b = tr["from"], tr["to"]
        if a not in index or b not in index:
            bad = [x for x in (a, b) if x not in index]
            problems.append(f"{where}: unknown state {', '.join(map(repr, bad))}")
            continue
        if (a, b) in where_of:
            problems.append(f"{where}: duplicate transition {a} -> {b} (first at {where_of[(a, b)]})")
            continue
        where_of[(a, b)] = where
        try:
            prob = _number(tr["prob"], f"{where}: prob")
        except ValueError as exc:
            problems.append(str(exc))
            continue
        spec = str(tr["dist"])
        if spec in aliases:
            dist = aliases[spec]
        else:
            try:
                dist = parse_distribution(spec, base_dir)
            except (ValueError, OSError) as exc:
                problems.append(f"{where}: {exc}")
                continue
        p[index[a], index[b]] = prob
        # Zero-probability entries carry no distribution.
        if prob != 0:
            dists[index[a]][index[b]] = dist

    if problems:
        raise ModelFileError(problems, EXIT_INVALID)
    try:
        return validate(states, p, dists, tolerance=tolerance)
    except ModelValidationError as exc:
        located = []
        for msg in exc.violations:
            m = re.match(r"(\S+) -> (\S+):", msg)
            if m and (m.group(1), m.group(2)) in where_of:
                msg = f"{where_of[(m.group(1), m.group(2))]}: {msg}"
            located.append(msg)
        raise ModelFileError(located, EXIT_INVALID) from None


def parse_model(path, *, tolerance: float | None = None) -> SmpModel:
    """Read, parse and validate a model file.

    Raises :class:`ModelFileError` whose ``exit_code`` is 2 for I/O
    problems, 3 for malformed JSON and 4 for invalid models.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFileError([f"{path}: {exc.strerror or exc}"], EXIT_IO) from None
    return parse_model_text(text, path.parent, tolerance=tolerance)


def _literal(d: WaitingTimeDistribution) -> str:
    if isinstance(d, Weibull):
        return f"weibull({d.gamma!r}, {d.theta!r})"
    if isinstance(d, Exponential):
        return f"exponential({d.rate!r})"
    if isinstance(d, Empirical) and d.source:
        return f"empirical({json.dumps(d.source)})"
    raise ValueError(f"cannot serialise {d!r}")


def dump_model(model: SmpModel) -> str:
    """Serialise a model back to the file format (distributions named d1, d2, ...)."""
    names: dict[str, str] = {}
    transitions = []
    for i, row in enumerate(model.dists):
        for j, d in enumerate(row):
            if d is None:
                continue
            lit = _literal(d)
            names.setdefault(lit, f"d{len(names) + 1}")
            transitions.append(
                {"from": model.labels[i], "to": model.labels[j], "prob": repr(float(model.p[i, j])), "dist": names[lit]}
            )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "states": list(model.labels),
        "defaults": {v: k for k, v in names.items()},
        "transitions": transitions,
    }
    return json.dumps(doc, indent=2)
