"""File formats read and written by the pipeline.

Tabular files are UTF-8 CSV whose first line is ``# {json header}`` with a
``schema`` name and ``version``. Geometries travel as GeoJSON.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import mapping, shape

from .events import CountMatrix, CrashEvent
from .exposure import ExposureVector, FlowRecord, Zone
from .network import AdjacencyMatrix, NetworkLattice, Segment

SCHEMA_VERSION = 1


class FormatError(ValueError):
    """Malformed input, reported with file and line (or feature) context."""

    def __init__(self, path, where, message):
        super().__init__(f"{path}:{where}: {message}")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _num(v):
    """Shortest round-trip text for numbers."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, schema: str, columns: Sequence[str], rows: Iterable[Sequence], **meta) -> None:
    header = {"schema": schema, "version": SCHEMA_VERSION, "columns": list(columns), **meta}
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(v) for v in r])


def read_table(path, required: Sequence[str] = ()) -> tuple[dict, list[dict], list[int]]:
    """Return ``(header, rows, line_numbers)``; ``header`` is {} when absent."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    header, start = {}, 0
    while start < len(lines) and lines[start].startswith("#"):
        if start == 0:
            try:
                header = json.loads(lines[0][1:].strip() or "{}")
            except json.JSONDecodeError:
                header = {}
        start += 1
    reader = csv.DictReader(_io.StringIO("\n".join(lines[start:])))
    cols = reader.fieldnames or []
    missing = [c for c in required if c not in cols]
    if missing:
        raise FormatError(path, start + 1, f"missing columns {missing}")
    rows, lnos = [], []
    for k, r in enumerate(reader):
        rows.append(r)
        lnos.append(start + 2 + k)
    return header, rows, lnos


def _float(path, lno, row, key):
    try:
        v = float(row[key])
    except (TypeError, ValueError):
        raise FormatError(path, lno, f"column {key!r} is not a number: {row.get(key)!r}") from None
    if not math.isfinite(v):
        raise FormatError(path, lno, f"column {key!r} is not finite")
    return v


def _int(path, lno, row, key):
    try:
        return int(row[key])
    except (TypeError, ValueError):
        raise FormatError(path, lno, f"column {key!r} is not an integer: {row.get(key)!r}") from None


# ----- segments ----------------------------------------------------------
def _segment_from(geom, props, path, where) -> Segment:
    if geom is None or geom.geom_type != "LineString":
        raise FormatError(path, where, "geometry must be a LineString")
    if "id" not in props:
        raise FormatError(path, where, "missing segment id")
    attrs = {k: v for k, v in props.items() if k not in ("id", "road_class", "length")}
    try:
        sid = int(props["id"])
        return Segment(sid, [tuple(c[:2]) for c in geom.coords], str(props.get("road_class", "other")), attrs)
    except (ValueError, TypeError) as exc:
        raise FormatError(path, where, str(exc)) from None


def read_segments(path) -> list[Segment]:
    """Segments from GeoJSON (LineString features) or CSV (``id,road_class,wkt``)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _, rows, lnos = read_table(path, ("id", "wkt"))
        out = []
        for r, lno in zip(rows, lnos):
            try:
                geom = shapely.from_wkt(r["wkt"])
            except Exception:
                raise FormatError(path, lno, "unparseable WKT") from None
            props = {k: v for k, v in r.items() if k != "wkt"}
            out.append(_segment_from(geom, props, path, lno))
        return out
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    out = []
    for k, feat in enumerate(doc.get("features", [])):
        where = f"feature {k}"
        try:
            geom = shape(feat["geometry"])
        except Exception:
            raise FormatError(path, where, "invalid geometry") from None
        out.append(_segment_from(geom, dict(feat.get("properties") or {}), path, where))
    return out


def write_segments(path, segments: Sequence[Segment], extra: dict | None = None) -> None:
    feats = []
    for s in segments:
        props = {"id": int(s.id), "road_class": s.road_class, "length": s.length, **dict(s.attributes)}
        if extra and s.id in extra:
            props.update(extra[s.id])
        feats.append({"type": "Feature", "properties": props,
                      "geometry": {"type": "LineString", "coordinates": [list(map(float, p)) for p in s.polyline]}})
    doc = {"type": "FeatureCollection", "schema": "netcar/segments", "version": SCHEMA_VERSION, "features": feats}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def write_adjacency(path, lattice: NetworkLattice) -> None:
    ids = lattice.ids
    rows = [(int(ids[a]), int(ids[b])) for a, b in lattice.adjacency.pairs]
    write_table(path, "netcar/adjacency", ("segment_id", "neighbour_id"), rows,
                order=lattice.adjacency.order, variant=lattice.adjacency.variant)


def read_adjacency(path, ids: Sequence[int]) -> AdjacencyMatrix:
    _, rows, lnos = read_table(path, ("segment_id", "neighbour_id"))
    pos = {int(s): k for k, s in enumerate(ids)}
    pairs = []
    for r, lno in zip(rows, lnos):
        a, b = _int(path, lno, r, "segment_id"), _int(path, lno, r, "neighbour_id")
        if a not in pos or b not in pos:
            raise FormatError(path, lno, "unknown segment id")
        pairs.append(tuple(sorted((pos[a], pos[b]))))
    return AdjacencyMatrix(len(ids), np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2))


def write_adjacency_matrix(path, lattice: NetworkLattice) -> None:
    ids = [int(i) for i in lattice.ids]
    M = lattice.adjacency.dense().astype(int)
    write_table(path, "netcar/adjacency-matrix", ["segment_id"] + [str(i) for i in ids],
                ([ids[k]] + list(M[k]) for k in range(len(ids))))


# ----- zones and flows ----------------------------------------------------
def read_zones(path) -> list[Zone]:
    path = Path(path)
    out = []
    if path.suffix.lower() == ".csv":
        _, rows, lnos = read_table(path, ("id", "wkt"))
        for r, lno in zip(rows, lnos):
            try:
                out.append(Zone(r["id"], shapely.from_wkt(r["wkt"])))
            except Exception as exc:
                raise FormatError(path, lno, str(exc)) from None
        return out
    doc = json.loads(path.read_text(encoding="utf-8"))
    for k, feat in enumerate(doc.get("features", [])):
        try:
            out.append(Zone(feat["properties"]["id"], shape(feat["geometry"])))
        except Exception as exc:
            raise FormatError(path, f"feature {k}", str(exc)) from None
    return out


def write_zones(path, zones: Sequence[Zone]) -> None:
    feats = [{"type": "Feature", "properties": {"id": z.id}, "geometry": mapping(z.polygon)} for z in zones]
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": feats}), encoding="utf-8")


def read_flows(path) -> list[FlowRecord]:
    _, rows, lnos = read_table(path, ("origin", "destination", "count"))
    out = []
    for r, lno in zip(rows, lnos):
        c = _float(path, lno, r, "count")
        if c < 0:
            raise FormatError(path, lno, "negative flow count")
        out.append(FlowRecord(_coerce_id(r["origin"]), _coerce_id(r["destination"]), c))
    return out


def _coerce_id(v: str):
    try:
        return int(v)
    except ValueError:
        return v


# ----- events and counts --------------------------------------------------
def read_events(path) -> list[CrashEvent]:
    _, rows, lnos = read_table(path, ("id", "x", "y", "severity"))
    out = []
    for r, lno in zip(rows, lnos):
        try:
            year = int(r["year"]) if r.get("year") not in (None, "") else None
            out.append(CrashEvent(_coerce_id(r["id"]), _float(path, lno, r, "x"), _float(path, lno, r, "y"),
                                  _int(path, lno, r, "severity"), year))
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(path, lno, str(exc)) from None
    return out


def write_events(path, events: Sequence[CrashEvent]) -> None:
    write_table(path, "netcar/events", ("id", "x", "y", "severity", "year"),
                ((e.id, e.x, e.y, e.severity, "" if e.year is None else e.year) for e in events))


def write_counts(path, counts: CountMatrix) -> None:
    cols = ["segment_id"] + [f"y{j + 1}" for j in range(counts.J)]
    write_table(path, "netcar/counts", cols, ([int(s)] + list(row) for s, row in zip(counts.segment_ids, counts.Y)))


def read_counts(path) -> CountMatrix:
    hdr, rows, lnos = read_table(path, ("segment_id",))
    ycols = sorted((c for c in (rows[0].keys() if rows else []) if c.startswith("y") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if not ycols:
        raise FormatError(path, 2, "no count columns y1..yJ")
    ids, Y = [], []
    for r, lno in zip(rows, lnos):
        ids.append(_int(path, lno, r, "segment_id"))
        vals = [_int(path, lno, r, c) for c in ycols]
        if min(vals) < 0:
            raise FormatError(path, lno, "negative count")
        Y.append(vals)
    return CountMatrix(np.array(Y, dtype=np.int64).reshape(len(ids), len(ycols)), np.array(ids))


def write_exposure(path, ev: ExposureVector, zone_of=None) -> None:
    cols = ["segment_id", "E", "length_km", "zone_flow"] + (["zone_id"] if zone_of else [])
    rows = []
    for k, s in enumerate(ev.segment_ids):
        r = [int(s), ev.E[k], ev.length_km[k], ev.zone_flow[k]]
        if zone_of:
            r.append(zone_of[int(s)])
        rows.append(r)
    write_table(path, "netcar/exposure", cols, rows)


def read_exposure(path) -> ExposureVector:
    _, rows, lnos = read_table(path, ("segment_id", "E"))
    ids, E, km, fl = [], [], [], []
    for r, lno in zip(rows, lnos):
        ids.append(_int(path, lno, r, "segment_id"))
        e = _float(path, lno, r, "E")
        if e <= 0:
            raise FormatError(path, lno, "exposure must be positive")
        E.append(e)
        km.append(_float(path, lno, r, "length_km") if r.get("length_km") else math.nan)
        fl.append(_float(path, lno, r, "zone_flow") if r.get("zone_flow") else math.nan)
    return ExposureVector(np.array(E), np.array(km), np.array(fl), np.array(ids))


def read_covariates(path) -> tuple[np.ndarray, dict]:
    """Covariate table keyed by ``segment_id``; values stay strings until a
    column is declared numeric or categorical."""
    _, rows, lnos = read_table(path, ("segment_id",))
    ids = np.array([_int(path, lno, r, "segment_id") for r, lno in zip(rows, lnos)])
    cols = {c: [r[c] for r in rows] for c in (rows[0].keys() if rows else []) if c != "segment_id"}
    return ids, cols


def write_covariates(path, ids, cols: dict) -> None:
    names = list(cols)
    write_table(path, "netcar/covariates", ["segment_id"] + names,
                ([int(s)] + [cols[c][k] for c in names] for k, s in enumerate(ids)))


def align(ids_target, ids_source, what: str, path=None) -> np.ndarray:
    """Index array mapping ``ids_target`` positions into ``ids_source`` rows."""
    pos = {int(s): k for k, s in enumerate(ids_source)}
    missing = [int(s) for s in ids_target if int(s) not in pos]
    if missing:
        raise FormatError(path or what, 0, f"{what} lacks segments {missing[:10]}")
    return np.array([pos[int(s)] for s in ids_target], dtype=np.int64)
