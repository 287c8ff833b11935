"""Deterministic, versioned serialization of traces, checkpoints, reports.

File layout (format version 1), shared by every artifact kind:

* line 1: a single-line JSON header carrying ``format_version``, ``kind``
  and the kind-specific fields listed below;
* remaining lines: one record per line, space-separated columns.

Trace files declare the sample schema (column order) and sample count in
the header; checkpoint files declare the potential length and carry the
adaptive-engine state needed for bit-exact resume.  Every float is written
with ``repr``, whose shortest round-trip representation restores the exact
double, so read(write(x)) is bit-identical; missing optional values are
the single character ``-``.  JSON numbers use the IEEE extensions
(``Infinity``/``NaN``) accepted by the standard library parser.

Error taxonomy: damaged bodies (truncation, arity, unparsable tokens) are
``CorruptFile``; header-level disagreements (kind, backend, schema) are
``SchemaMismatch``; an unsupported ``format_version`` is
``VersionMismatch``.
"""

import hashlib
import json

import numpy as np

from .diagnostics import SAMPLE_SCHEMA, DiagnosticsSample
from .errors import CorruptFile, SchemaMismatch, VersionMismatch
from .geometry import BACKENDS, toric_state, torus_state
from .scale import TERMINATIONS, Trace

FORMAT_VERSION = 1


def config_hash(cfg_dict):
    """64-bit hash of a logical config, independent of key order."""
    canon = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _fmt(x):
    if x is None:
        return "-"
    return repr(float(x))


def _parse(tok):
    if tok == "-":
        return None
    try:
        return float(tok)
    except ValueError as exc:
        raise CorruptFile(f"unparsable float token {tok!r}") from exc


def _header(line, want_kind):
    try:
        head = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"unreadable header: {exc}") from exc
    if not isinstance(head, dict) or "format_version" not in head:
        raise CorruptFile("header is not a format header")
    if head["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"format version {head['format_version']} not supported "
            f"(this build reads {FORMAT_VERSION})"
        )
    if head.get("kind") != want_kind:
        raise SchemaMismatch(
            f"expected a {want_kind} file, found {head.get('kind')!r}"
        )
    return head


def write_trace(trace, path):
    head = {
        "format_version": FORMAT_VERSION,
        "kind": "trace",
        "backend": trace.metadata.get("backend"),
        "resolution": trace.metadata.get("resolution"),
        "config_hash": trace.metadata.get("config_hash"),
        "schema": list(SAMPLE_SCHEMA),
        "n_samples": len(trace.samples),
        "t_start": trace.t_start,
        "t_end": trace.t_end,
        "termination": trace.termination,
        "metadata": trace.metadata,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for s in trace.samples:
            fh.write(
                " ".join(_fmt(getattr(s, name)) for name in SAMPLE_SCHEMA)
                + "\n"
            )


def read_trace(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorruptFile("empty file")
    head = _header(lines[0], "trace")
    for key in ("schema", "n_samples", "t_start", "t_end", "termination"):
        if key not in head:
            raise CorruptFile(f"trace header is missing {key!r}")
    if list(head["schema"]) != list(SAMPLE_SCHEMA):
        raise SchemaMismatch("trace schema differs from this build's schema")
    if head["termination"] not in TERMINATIONS:
        raise SchemaMismatch(
            f"unknown termination {head['termination']!r}"
        )
    body = lines[1:]
    if len(body) != head["n_samples"]:
        raise CorruptFile(
            f"expected {head['n_samples']} samples, found {len(body)} lines"
        )
    samples = []
    for line in body:
        toks = line.split()
        if len(toks) != len(SAMPLE_SCHEMA):
            raise CorruptFile(
                f"sample arity {len(toks)} != schema arity "
                f"{len(SAMPLE_SCHEMA)}"
            )
        vals = dict(zip(SAMPLE_SCHEMA, (_parse(t) for t in toks)))
        for name in SAMPLE_SCHEMA[:9]:
            if vals[name] is None:
                raise CorruptFile(f"required column {name} is missing")
        samples.append(DiagnosticsSample(**vals))
    return Trace(
        samples=tuple(samples),
        t_start=head["t_start"],
        t_end=head["t_end"],
        termination=head["termination"],
        metadata=head.get("metadata", {}),
    )


class CheckpointData:
    """Parsed checkpoint: the state plus the adaptive-engine dictionary."""

    def __init__(self, state, engine, config_hash):
        self.state = state
        self.engine = engine
        self.config_hash = config_hash


def write_checkpoint(state, engine_dict, cfg_hash, path):
    vals = state.values().ravel()
    head = {
        "format_version": FORMAT_VERSION,
        "kind": "checkpoint",
        "backend": state.backend,
        "resolution": state.resolution,
        "config_hash": cfg_hash,
        "t": state.t,
        "engine": engine_dict,
        "n_values": int(vals.size),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for x in vals:
            fh.write(repr(float(x)) + "\n")


def read_checkpoint(path, expect_backend=None, expect_resolution=None):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorruptFile("empty file")
    head = _header(lines[0], "checkpoint")
    backend = head.get("backend")
    if backend not in BACKENDS:
        raise SchemaMismatch(f"unknown backend {backend!r}")
    if expect_backend is not None and backend != expect_backend:
        raise SchemaMismatch(
            f"checkpoint backend {backend} != expected {expect_backend}"
        )
    res = head.get("resolution")
    if expect_resolution is not None and res != expect_resolution:
        raise SchemaMismatch(
            f"checkpoint resolution {res} != expected {expect_resolution}"
        )
    body = lines[1:]
    if len(body) != head.get("n_values"):
        raise CorruptFile(
            f"expected {head.get('n_values')} values, found {len(body)}"
        )
    vals = np.array([_parse(tok) for tok in body], dtype=float)
    if np.any(np.isnan(vals)):
        raise CorruptFile("checkpoint contains missing values")
    t = head.get("t", 0.0)
    if backend == "torus":
        state = torus_state(vals.reshape(res, res), t)
    else:
        state = toric_state(vals, t)
    return CheckpointData(state, head.get("engine", {}),
                          head.get("config_hash"))


def write_report(report_dict, path):
    """Canonical JSON report; identical inputs give identical bytes."""
    head = {
        "format_version": FORMAT_VERSION,
        "kind": "report",
        "report": report_dict,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(head, sort_keys=True, indent=1) + "\n")


def read_report(path):
    with open(path) as fh:
        content = fh.read()
    try:
        head = json.loads(content)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"unreadable report: {exc}") from exc
    if not isinstance(head, dict) or "format_version" not in head:
        raise CorruptFile("report header is not a format header")
    if head["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"format version {head['format_version']} not supported"
        )
    if head.get("kind") != "report":
        raise SchemaMismatch(
            f"expected a report file, found {head.get('kind')!r}"
        )
    return head["report"]
