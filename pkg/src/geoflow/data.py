"""Embedding dataset files, prediction tables and their validation.

NDJSON layout, one object per line::

    {"header": true, "dims": {"vgi": 64, "rsi": 64}}      (optional, first line)
    {"id": "c3-0007", "lat": 12.5, "lon": -40.0, "modality": "vgi", "vec": [...]}

CSV layout: columns ``id,lat,lon,modality,vec_b64`` where ``vec_b64`` is base64
of little-endian float32 values.
"""
from __future__ import annotations

import base64
import binascii
import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DimensionError, DuplicateIdError, ParseError
from .retrieval import MODALITIES, EmbeddingRecord
from .sphere import GeoCoord

CSV_FIELDS = ("id", "lat", "lon", "modality", "vec_b64")


def _coord(lat, lon, lineno):
    try:
        lat, lon = float(lat), float(lon)
    except (TypeError, ValueError):
        raise ParseError("lat/lon must be numbers", lineno) from None
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ParseError("lat/lon must be finite", lineno)
    if not -90.0 <= lat <= 90.0:
        raise ParseError(f"latitude {lat} outside [-90, 90]", lineno)
    return GeoCoord(lat, lon)


def _record(rid, lat, lon, modality, vec, lineno):
    if not isinstance(rid, str) or not rid:
        raise ParseError("id must be a non-empty string", lineno)
    if modality not in MODALITIES:
        raise ParseError(f"modality must be one of {MODALITIES}, got {modality!r}", lineno)
    try:
        v = np.asarray(vec, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError("vec must be a list of numbers", lineno) from None
    if v.ndim != 1 or v.size == 0:
        raise ParseError("vec must be a non-empty flat list", lineno)
    if not np.all(np.isfinite(v)):
        raise ParseError("vec contains non-finite values", lineno)
    return EmbeddingRecord(rid, _coord(lat, lon, lineno), modality, v)


def _validate(records, linenos, dims):
    seen = {}
    for r, ln in zip(records, linenos):
        key = (r.modality, r.id)
        if key in seen:
            raise DuplicateIdError(f"line {ln}: duplicate {r.modality} id {r.id!r} (first on line {seen[key]})")
        seen[key] = ln
        want = dims.get(r.modality)
        if want is None:
            dims[r.modality] = r.vector.shape[0]
        elif r.vector.shape[0] != want:
            raise DimensionError(f"line {ln}: {r.modality} vector has dim {r.vector.shape[0]}, expected {want}")


def _load_ndjson(path):
    records, linenos, dims = [], [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if obj.get("header"):
                if records:
                    raise ParseError("header must precede records", lineno)
                dims = {k: int(v) for k, v in dict(obj.get("dims", {})).items()}
                continue
            missing = [k for k in ("id", "lat", "lon", "modality", "vec") if k not in obj]
            if missing:
                raise ParseError(f"missing field(s) {', '.join(missing)}", lineno)
            records.append(_record(obj["id"], obj["lat"], obj["lon"], obj["modality"], obj["vec"], lineno))
            linenos.append(lineno)
    return records, linenos, dims


def decode_vec(s: str, lineno=None) -> np.ndarray:
    try:
        raw = base64.b64decode(s, validate=True)
    except (binascii.Error, ValueError):
        raise ParseError("vec_b64 is not valid base64", lineno) from None
    if len(raw) % 4:
        raise ParseError("vec_b64 length is not a multiple of 4 bytes", lineno)
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def encode_vec(v) -> str:
    return base64.b64encode(np.asarray(v, dtype="<f4").tobytes()).decode("ascii")


def _load_csv(path):
    records, linenos = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return records, linenos, {}
        missing = set(CSV_FIELDS) - set(reader.fieldnames)
        if missing:
            raise ParseError(f"missing column(s) {', '.join(sorted(missing))}", 1)
        for row in reader:
            ln = reader.line_num
            records.append(_record(row["id"], row["lat"], row["lon"], row["modality"],
                                   decode_vec(row["vec_b64"], ln), ln))
            linenos.append(ln)
    return records, linenos, {}


def load_dataset(path) -> list[EmbeddingRecord]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    loader = _load_csv if path.suffix.lower() == ".csv" else _load_ndjson
    records, linenos, dims = loader(path)
    if not records:
        raise ParseError(f"{path}: no records")
    _validate(records, linenos, dims)
    return records


def write_dataset(path, records, header: bool = True):
    path = Path(path)
    records = list(records)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for r in records:
                w.writerow([r.id, repr(r.geo.lat_deg), repr(r.geo.lon_deg), r.modality, encode_vec(r.vector)])
        return
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            dims = {}
            for r in records:
                dims.setdefault(r.modality, int(r.vector.shape[0]))
            fh.write(json.dumps({"header": True, "dims": dims}) + "\n")
        for r in records:
            fh.write(json.dumps({"id": r.id, "lat": r.geo.lat_deg, "lon": r.geo.lon_deg,
                                 "modality": r.modality, "vec": r.vector.tolist()}) + "\n")


def split_modalities(records):
    vgi = [r for r in records if r.modality == "vgi"]
    rsi = [r for r in records if r.modality == "rsi"]
    return vgi, rsi


def paired_arrays(vgi, rsi):
    """Aligned (vgi, rsi) matrices for ids present in both modalities, sorted by id."""
    by_id = {r.id: r for r in rsi}
    ids = sorted(r.id for r in vgi if r.id in by_id)
    if len(ids) < 2:
        raise ParseError("need at least two VGI/RSI pairs sharing an id")
    vmap = {r.id: r for r in vgi}
    return (ids, np.stack([vmap[i].vector for i in ids]), np.stack([by_id[i].vector for i in ids]))


# ---------------------------------------------------------------------------
# location tables


def write_locations(path, ids, coords, prefix: str = "pred_"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", f"{prefix}lat", f"{prefix}lon"])
        for i, g in zip(ids, coords):
            w.writerow([i, repr(g.lat_deg), repr(g.lon_deg)])


def load_locations(path) -> dict:
    """id -> GeoCoord from a CSV with lat/lon or pred_lat/pred_lon columns."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "pred_lat" in cols and "pred_lon" in cols:
            la, lo = "pred_lat", "pred_lon"
        elif "lat" in cols and "lon" in cols:
            la, lo = "lat", "lon"
        else:
            raise ParseError(f"{path}: need id plus lat/lon or pred_lat/pred_lon columns", 1)
        if "id" not in cols:
            raise ParseError(f"{path}: missing id column", 1)
        for row in reader:
            ln = reader.line_num
            if row["id"] in out:
                raise DuplicateIdError(f"{path} line {ln}: duplicate id {row['id']!r}")
            out[row["id"]] = _coord(row[la], row[lo], ln)
    if not out:
        raise ParseError(f"{path}: no records")
    return out
