"""Bit-exact serialization.

OTS container ("omni token stream"), version 1:

    bytes 0..3    magic b"OTS1"
    bytes 4..11   header length H, unsigned 64-bit little-endian
    bytes 12..    UTF-8 JSON header, exactly H bytes, canonical form
                  (lexicographically sorted keys, no whitespace)
    next          payload: row-major float32 little-endian embeddings,
                  exactly n*d*4 bytes
    then          one block per header-declared section, in header order:
                  unsigned 64-bit LE byte length, then that many bytes of
                  float32 little-endian data

The header declares n, d, t, per-modality counts, per-token modality codes /
window ids / positions, generator provenance, and the section table (name,
shape, length). Sections carry saliency vectors, attention matrices, or
query logits keyed by name. Canonical form means identical inputs produce
identical bytes. Readers validate every declared size before touching the
data, so truncation is caught without materializing anything.

Configuration documents are plain JSON with fixed schemas; unknown keys are
rejected outright because a typo in a boundary would silently corrupt every
downstream number. Reports emit CSV with a header row and '#' metadata
comments; JSON mirrors exist for tooling.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .allocator import BudgetPlan
from .core import (
    AUDIO,
    TEXT,
    VISUAL,
    EngineError,
    ModelConfig,
    RetentionSpec,
    TokenStream,
)
from .cost import CostReport
from .pipeline import PrefillTrace, SynthSpec
from .schedule import SchedulePlan, block_of

MAGIC = b"OTS1"
OTS_VERSION = 1


class ContainerFormatError(EngineError):
    """Malformed or truncated OTS bytes."""


class ConfigError(EngineError):
    """Malformed configuration document."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_ots(
    stream: TokenStream,
    sections: dict[str, np.ndarray] | None = None,
    generator: dict | None = None,
    T: int | None = None,
) -> bytes:
    """Serialize a stream (and optional named float sections) canonically."""
    sections = sections or {}
    nontext = stream.window_id >= 0
    if T is None:
        T = int(stream.window_id[nontext].max()) + 1 if nontext.any() else 1
    section_table = []
    blobs = []
    for name in sorted(sections):
        arr = np.ascontiguousarray(np.asarray(sections[name], dtype="<f4"))
        raw = arr.tobytes()
        section_table.append(
            {"length": len(raw), "name": name, "shape": list(arr.shape)}
        )
        blobs.append(raw)
    header = {
        "counts": {
            "audio": stream.n_audio,
            "text": stream.n_text,
            "visual": stream.n_visual,
        },
        "d": stream.d,
        "generator": generator,
        "modality": stream.modality.tolist(),
        "n": stream.n,
        "position": stream.position.tolist(),
        "sections": section_table,
        "t": int(T),
        "version": OTS_VERSION,
        "window_id": stream.window_id.tolist(),
    }
    header_bytes = _canonical_json(header)
    payload = np.ascontiguousarray(stream.embeddings.astype("<f4")).tobytes()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<Q", len(header_bytes))
    out += header_bytes
    out += payload
    for raw in blobs:
        out += struct.pack("<Q", len(raw))
        out += raw
    return bytes(out)


def write_ots_file(path, stream, sections=None, generator=None, T=None) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(write_ots(stream, sections, generator, T))
    except OSError as exc:
        raise ContainerFormatError(f"cannot write {path}: {exc}") from exc


def read_ots(data: bytes) -> tuple[TokenStream, dict[str, np.ndarray], dict]:
    """Parse OTS bytes back into (stream, sections, header).

    Strict inverse of write_ots on valid input; every size is checked against
    what the header declares before any array is built.
    """
    if len(data) < 12:
        raise ContainerFormatError(
            f"truncated at byte {len(data)}: magic and header length need 12 bytes"
        )
    if data[:4] != MAGIC:
        # "OTS" followed by an unexpected digit is a later/earlier container
        # revision, not garbage; report it as a version problem.
        if data[:3] == MAGIC[:3]:
            raise ContainerFormatError(
                f"unsupported container version {data[:4]!r}, this reader "
                f"handles {MAGIC!r}"
            )
        raise ContainerFormatError(
            f"bad magic at byte 0: got {data[:4]!r}, expected {MAGIC!r}"
        )
    (header_len,) = struct.unpack("<Q", data[4:12])
    if 12 + header_len > len(data):
        raise ContainerFormatError(
            f"truncated header at byte 12: declared {header_len} bytes, "
            f"{len(data) - 12} available"
        )
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"unreadable header at byte 12: {exc}") from exc
    if not isinstance(header, dict):
        raise ContainerFormatError("header must be a JSON object")
    version = header.get("version")
    if version != OTS_VERSION:
        raise ContainerFormatError(
            f"unsupported version {version!r}, this reader handles {OTS_VERSION}"
        )

    for key in ("n", "d", "t", "counts", "modality", "window_id", "position",
                "sections"):
        if key not in header:
            raise ContainerFormatError(f"header lacks required key {key!r}")
    n, d = int(header["n"]), int(header["d"])
    if n < 0 or d < 1:
        raise ContainerFormatError(f"invalid dimensions n={n}, d={d}")
    for key in ("modality", "window_id", "position"):
        if len(header[key]) != n:
            raise ContainerFormatError(
                f"header {key!r} lists {len(header[key])} entries, n={n}"
            )
    modality = np.asarray(header["modality"], dtype=np.int64)
    declared = header["counts"]
    for label, code in (("visual", VISUAL), ("audio", AUDIO), ("text", TEXT)):
        actual = int(np.count_nonzero(modality == code))
        if declared.get(label) != actual:
            raise ContainerFormatError(
                f"count mismatch: header says {declared.get(label)} {label} "
                f"tokens, codes tally {actual}"
            )

    offset = 12 + header_len
    payload_len = n * d * 4
    if offset + payload_len > len(data):
        raise ContainerFormatError(
            f"truncated payload at byte {offset}: need {payload_len} bytes "
            f"(n*d*4), found {len(data) - offset}"
        )
    embeddings = np.frombuffer(
        data, dtype="<f4", count=n * d, offset=offset
    ).reshape(n, d)
    offset += payload_len

    sections: dict[str, np.ndarray] = {}
    for entry in header["sections"]:
        name = entry.get("name")
        length = int(entry.get("length", -1))
        shape = tuple(int(x) for x in entry.get("shape", ()))
        expected = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 0
        if length != expected:
            raise ContainerFormatError(
                f"section {name!r} declares {length} bytes but shape {shape} "
                f"needs {expected}"
            )
        if offset + 8 > len(data):
            raise ContainerFormatError(
                f"truncated section prefix for {name!r} at byte {offset}"
            )
        (stored_len,) = struct.unpack("<Q", data[offset : offset + 8])
        if stored_len != length:
            raise ContainerFormatError(
                f"section {name!r} prefix at byte {offset} says {stored_len} "
                f"bytes, header says {length}"
            )
        offset += 8
        if offset + length > len(data):
            raise ContainerFormatError(
                f"truncated section {name!r} at byte {offset}: need {length} "
                f"bytes, found {len(data) - offset}"
            )
        sections[name] = np.frombuffer(
            data, dtype="<f4", count=length // 4, offset=offset
        ).reshape(shape)
        offset += length
    if offset != len(data):
        raise ContainerFormatError(
            f"{len(data) - offset} unexpected trailing bytes at byte {offset}"
        )

    stream = TokenStream(
        embeddings=embeddings,
        modality=modality,
        window_id=np.asarray(header["window_id"], dtype=np.int64),
        position=np.asarray(header["position"], dtype=np.int64),
    )
    return stream, sections, header


def read_ots_file(path) -> tuple[TokenStream, dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ContainerFormatError(f"cannot read {path}: {exc}") from exc
    return read_ots(data)


# ---------------------------------------------------------------- configs

def _load_document(source, schema: dict, kind: str) -> dict:
    """source is a path or a dict; schema maps key -> required flag."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {kind} file {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{kind} file {source} is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{kind} document must be a JSON object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"unknown {kind} keys: {', '.join(unknown)}")
    missing = sorted(k for k, required in schema.items() if required and k not in doc)
    if missing:
        raise ConfigError(f"missing {kind} keys: {', '.join(missing)}")
    return doc


def load_model_config(source) -> ModelConfig:
    doc = _load_document(
        source,
        {"layers": True, "d_model": True, "d_ff": True, "n_heads": True,
         "boundaries": True},
        "model config",
    )
    boundaries = doc["boundaries"]
    if not (isinstance(boundaries, list) and len(boundaries) == 4):
        raise ConfigError("boundaries must be a list of four layer indices")
    try:
        return ModelConfig(
            layers=int(doc["layers"]),
            d_model=int(doc["d_model"]),
            d_ff=int(doc["d_ff"]),
            n_heads=int(doc["n_heads"]),
            boundaries=tuple(int(b) for b in boundaries),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_retention_spec(source) -> RetentionSpec:
    doc = _load_document(
        source,
        {"ratio_visual": True, "ratio_audio": True, "lambda": True,
         "tau": True, "ratio": False},
        "retention spec",
    )
    try:
        return RetentionSpec(
            r_v=float(doc["ratio_visual"]),
            r_a=float(doc["ratio_audio"]),
            lambda_=float(doc["lambda"]),
            tau=float(doc["tau"]),
            r=float(doc["ratio"]) if "ratio" in doc else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_synth_spec(source) -> SynthSpec:
    doc = _load_document(
        source,
        {"seed": True, "windows": True, "d": True, "visual_per_window": True,
         "audio_per_window": True, "text_tokens": True,
         "planted_windows": False, "planted_gain": False},
        "synth spec",
    )
    try:
        return SynthSpec(
            seed=int(doc["seed"]),
            T=int(doc["windows"]),
            d=int(doc["d"]),
            n_v=int(doc["visual_per_window"]),
            n_a=int(doc["audio_per_window"]),
            n_q=int(doc["text_tokens"]),
            planted_windows=tuple(doc.get("planted_windows", ())),
            planted_gain=float(doc.get("planted_gain", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- reports

def schedule_csv(
    plan_v: SchedulePlan,
    plan_a: SchedulePlan,
    config: ModelConfig,
    c_value: float,
) -> str:
    """Per-layer schedule table. With one shared target the two trr columns
    coincide and a single delta comment is emitted."""
    lines = [f"# C={c_value:.3f}"]
    if plan_v.delta == plan_a.delta:
        lines.append(f"# delta={plan_v.delta:.4f}")
    else:
        lines.append(f"# delta_v={plan_v.delta:.4f}")
        lines.append(f"# delta_a={plan_a.delta:.4f}")
    lines.append("layer,block,trr_v,trr_a")
    for layer in range(1, config.layers + 1):
        lines.append(
            f"{layer},{block_of(layer, config)},"
            f"{plan_v.trr_at(layer):.6f},{plan_a.trr_at(layer):.6f}"
        )
    return "\n".join(lines) + "\n"


def schedule_json(plan_v, plan_a, config, c_value) -> str:
    doc = {
        "C": c_value,
        "delta_a": plan_a.delta,
        "delta_v": plan_v.delta,
        "layers": [
            {
                "block": block_of(layer, config),
                "layer": layer,
                "trr_a": plan_a.trr_at(layer),
                "trr_v": plan_v.trr_at(layer),
            }
            for layer in range(1, config.layers + 1)
        ],
    }
    return _canonical_json(doc).decode("utf-8")


def budget_csv(plan: BudgetPlan) -> str:
    lines = ["window,B,B_v,B_a"]
    for t in range(plan.T):
        lines.append(f"{t},{int(plan.b[t])},{int(plan.b_v[t])},{int(plan.b_a[t])}")
    return "\n".join(lines) + "\n"


def budget_json(plan: BudgetPlan) -> str:
    doc = {
        "budgets": [
            {"B": int(plan.b[t]), "B_a": int(plan.b_a[t]),
             "B_v": int(plan.b_v[t]), "window": t}
            for t in range(plan.T)
        ],
        "totals": {"audio": plan.totals[1], "combined": plan.totals[2],
                   "visual": plan.totals[0]},
    }
    return _canonical_json(doc).decode("utf-8")


def trace_csv(trace: PrefillTrace) -> str:
    n_v, n_a, n_q = trace.n_original
    ls, lm1, lm2, ll = trace.config.boundaries
    lines = [
        f"# layers={trace.layers}",
        f"# boundaries={ls},{lm1},{lm2},{ll}",
        f"# windows={trace.T}",
        f"# n_visual={n_v}",
        f"# n_audio={n_a}",
        f"# n_text={n_q}",
        f"# ratio_visual={trace.retention.r_v:.6f}",
        f"# ratio_audio={trace.retention.r_a:.6f}",
        f"# lambda={trace.retention.lambda_:.6f}",
        f"# tau={trace.retention.tau:.6f}",
        "layer,seq_len,kept_visual,kept_audio,kept_text",
    ]
    for i in range(trace.layers):
        lines.append(
            f"{i + 1},{int(trace.seq_len[i])},{int(trace.kept_v[i])},"
            f"{int(trace.kept_a[i])},{int(trace.kept_text[i])}"
        )
    return "\n".join(lines) + "\n"


@dataclasses.dataclass(frozen=True)
class TraceView:
    """Just enough of a trace, reloaded from CSV, to price it."""

    seq_len: np.ndarray
    n_original: tuple[int, int, int]

    @property
    def layers(self) -> int:
        return int(self.seq_len.shape[0])


def parse_trace_csv(text: str) -> TraceView:
    meta: dict[str, str] = {}
    rows: list[tuple[int, int]] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line:
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line != "layer,seq_len,kept_visual,kept_audio,kept_text":
                raise ContainerFormatError(
                    f"line {lineno}: unexpected trace header {line!r}"
                )
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ContainerFormatError(
                f"line {lineno}: expected 5 columns, got {len(parts)}"
            )
        rows.append((int(parts[0]), int(parts[1])))
    if not header_seen or not rows:
        raise ContainerFormatError("trace CSV has no data rows")
    try:
        n_original = (int(meta["n_visual"]), int(meta["n_audio"]),
                      int(meta["n_text"]))
    except KeyError as exc:
        raise ContainerFormatError(
            f"trace CSV lacks required metadata comment {exc}"
        ) from exc
    rows.sort()
    if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
        raise ContainerFormatError("trace CSV layer column must cover 1..L")
    return TraceView(
        seq_len=np.array([r[1] for r in rows], dtype=np.int64),
        n_original=n_original,
    )


def cost_csv(report: CostReport) -> str:
    lines = [
        f"# formula={report.formula}",
        f"# flops_total={report.flops_total:.6e}",
        f"# ratio_vs_full={report.ratio_vs_full:.6f}",
        f"# peak_kv_tokens={report.peak_kv_tokens}",
        "layer,flops,kv_tokens",
    ]
    for i, (fl, kv) in enumerate(
        zip(report.flops_per_layer, report.kv_tokens_per_layer), start=1
    ):
        lines.append(f"{i},{fl:.6e},{int(kv)}")
    return "\n".join(lines) + "\n"


def cost_json(report: CostReport) -> str:
    doc = {
        "flops_per_layer": [float(x) for x in report.flops_per_layer],
        "flops_total": report.flops_total,
        "formula": report.formula,
        "kv_tokens_per_layer": [int(x) for x in report.kv_tokens_per_layer],
        "peak_kv_tokens": report.peak_kv_tokens,
        "ratio_vs_full": report.ratio_vs_full,
    }
    return _canonical_json(doc).decode("utf-8")
