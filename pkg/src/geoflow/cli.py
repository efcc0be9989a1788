"""Command-line entry point: ``geoflow <subcommand> ...``.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import (
    load_dataset, load_locations, paired_arrays, split_modalities, write_dataset, write_locations,
)
from .density import density_grid, localizability
from .diffusion import ddpm_sample_batch
from .errors import ConfigError, DataError, GeoflowError, ParseError, UsageError
from .evaluation import evaluate, split
from .fieldnet import load_checkpoint, save_checkpoint
from .flowmatch import fm_sample_batch, medoids, rfm_sample_batch
from .pipeline import ProbGLCConfig, geolocate_batch, query_rng, threshold_sweep
from .retrieval import Gallery, ProjectionHead, rerank, retrieve_topk, train_heads
from .schedule import Schedule
from .sphere import GeoCoord, geo_to_xyz, uniform_batch, xyz_to_geo
from .synthetic import SyntheticWorldSpec, generate_synthetic
from .training import train_checkpoint

log = logging.getLogger("geoflow")

DATA_DIR = Path("geoflow_data")
DEFAULTS = {
    "train": DATA_DIR / "train.ndjson",
    "test": DATA_DIR / "test.ndjson",
    "gallery": DATA_DIR / "gallery.ndjson",
    "truth": DATA_DIR / "truth.csv",
    "checkpoint": DATA_DIR / "model.ckpt",
    "heads": DATA_DIR / "heads.npz",
}


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _floats(s: str):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _latlon(s: str) -> GeoCoord:
    v = _floats(s)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("expected LAT,LON")
    try:
        return GeoCoord(v[0], v[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _radius(s: str) -> float:
    return cfgmod._radius(s)


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _finite(v):
    return v if math.isfinite(v) else "inf"


# ---------------------------------------------------------------------------
# shared option groups


def _add_config(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)


def _add_model(p):
    p.add_argument("--method", choices=("ddpm", "fm", "rfm"))
    p.add_argument("--schedule", choices=("linear", "cosine"))
    p.add_argument("--hidden", help="comma-separated widths, e.g. 256,256,256")
    p.add_argument("--time-dim", type=int, dest="time_dim")
    p.add_argument("--activation", choices=("gelu", "relu"))
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-final", type=float, dest="lr_final")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--train-steps", type=int, dest="train_steps")


def _add_sampling(p):
    p.add_argument("--steps", type=int, help="sampler / ODE steps")
    p.add_argument("--draws", type=int)


def _add_fusion(p):
    p.add_argument("--r-km", type=_radius, dest="r_km", help="radius threshold; 'inf' for unbounded")
    p.add_argument("--alpha", type=float)
    p.add_argument("--anchors", type=int)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--fallback", choices=("generative", "global"))
    p.add_argument("--condition", choices=("raw", "projected"))
    p.add_argument("--localizability", type=int, help="Monte-Carlo samples per query (0 = off)")


def _run_config(args) -> cfgmod.RunConfig:
    keys = [k for k in cfgmod.KEYS if hasattr(args, k)]
    return cfgmod.build(getattr(args, "config", None), {k: getattr(args, k) for k in keys})


# ---------------------------------------------------------------------------
# helpers


def _queries(path):
    vgi = [r for r in load_dataset(path) if r.modality == "vgi"]
    if not vgi:
        raise ParseError(f"{path}: no VGI records")
    return vgi


def _gallery(path):
    rsi = [r for r in load_dataset(path) if r.modality == "rsi"]
    if not rsi:
        raise ParseError(f"{path}: no RSI records")
    return Gallery(rsi)


def _heads(path, d: int):
    if path is None or not Path(path).exists():
        if path is not None and Path(path) != DEFAULTS["heads"]:
            raise ParseError(f"{path}: no such file")
        log.warning("no projection heads found; using identity heads (raw cosine similarity)")
        return ProjectionHead.identity(d)
    return ProjectionHead.load(path)


def _checkpoint(path, method=None):
    try:
        ck = load_checkpoint(path)
    except FileNotFoundError:
        raise ParseError(f"{path}: no such file") from None
    if method is not None:
        ck.require(method)
    return ck


def _select(records, ids):
    if not ids:
        return records
    want = set(ids)
    out = [r for r in records if r.id in want]
    missing = want - {r.id for r in out}
    if missing:
        raise ParseError(f"unknown query id(s): {', '.join(sorted(missing))}")
    return out


def _draws(ck, conds, steps, draws, seed, ids):
    """(Q, M, 3) samples for any method; noise streams are per query id."""
    s = Schedule(ck.schedule, ck.t_clamp_min)
    q = conds.shape[0]
    c_rep = np.repeat(conds, draws, axis=0)
    if ck.method == "rfm":
        x1 = np.concatenate([uniform_batch(query_rng(seed, i), draws) for i in ids])
        x = rfm_sample_batch(ck.net, c_rep, steps, x1=x1, s=s)
    else:
        x1 = np.concatenate([query_rng(seed, i).standard_normal((draws, 3)) for i in ids])
        rng = np.random.default_rng(seed)
        if ck.method == "ddpm":
            x = ddpm_sample_batch(ck.net, c_rep, steps, rng, q * draws, s, x1=x1)
        else:
            x = fm_sample_batch(ck.net, c_rep, steps, rng, q * draws, x1=x1)
    return x.reshape(q, draws, 3)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    spec = SyntheticWorldSpec(
        n_clusters=args.clusters, kappa=args.kappa, n_pairs=args.pairs, n_distractors=args.distractors,
        dim=args.dim, noise_vgi=args.noise_vgi, noise_rsi=args.noise_rsi, onehot=args.onehot)
    vgi, rsi, truth = generate_synthetic(spec, args.seed)
    train_ids, test_ids = split([r.id for r in vgi], args.test_fraction, args.seed, allow_any=args.fraction_any)
    tr, te = set(train_ids), set(test_ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "train.ndjson", [r for r in vgi + rsi if r.id in tr])
    write_dataset(out / "test.ndjson", [r for r in vgi if r.id in te])
    write_dataset(out / "gallery.ndjson", rsi)
    write_locations(out / "truth.csv", test_ids, [truth[i] for i in test_ids], prefix="")
    print(f"wrote {len(train_ids)} train pairs, {len(test_ids)} test queries, "
          f"{len(rsi)} gallery tiles to {out}/")
    return 0


def cmd_train(args):
    rc = _run_config(args)
    vgi = _queries(args.data)
    x0 = geo_to_xyz([r.geo for r in vgi])
    conds = np.stack([r.vector for r in vgi])
    if rc.condition == "projected":
        heads = ProjectionHead.load(args.heads or DEFAULTS["heads"])
        conds = heads.project(conds, "vgi")
    s = Schedule(rc.schedule, rc.t_clamp_min)
    ck = train_checkpoint(rc.method, x0, conds, s, rc.train_steps, rc.hidden, rc.time_dim, rc.activation,
                          rc.batch_size, rc.lr, rc.lr_final or None, rc.seed)
    ck.metadata["condition"] = rc.condition
    save_checkpoint(args.out, ck)
    curve = ck.metadata["loss_curve"]
    print(f"trained {rc.method} for {rc.train_steps} steps; loss {curve[0]:.4f} -> {curve[-1]:.4f}; "
          f"saved {args.out}")
    return 0


def cmd_train_retrieval(args):
    rc = _run_config(args)
    vgi, rsi = split_modalities(load_dataset(args.data))
    _, a, b = paired_arrays(vgi, rsi)
    heads = train_heads(a, b, rc.proj_dim, rc.tau, rc.heads_steps, rc.batch_size, rc.lr, rc.seed)
    heads.save(args.out)
    print(f"trained heads on {len(a)} pairs; InfoNCE {heads.loss_curve[0]:.4f} -> "
          f"{heads.loss_curve[-1]:.4f}; saved {args.out}")
    return 0


def cmd_infer(args):
    rc = _run_config(args)
    ck = _checkpoint(args.checkpoint, args.method)
    qs = _select(_queries(args.queries), args.ids)
    conds = np.stack([q.vector for q in qs])
    if ck.metadata.get("condition") == "projected":
        conds = ProjectionHead.load(args.heads or DEFAULTS["heads"]).project(conds, "vgi")
    draws = _draws(ck, conds, rc.steps, rc.draws, rc.seed, [q.id for q in qs])
    preds = xyz_to_geo(medoids(draws))
    write_locations(args.out, [q.id for q in qs], preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _one_condition(args, ck):
    qs = _select(_queries(args.queries), [args.id] if args.id else None)
    q = qs[0]
    c = q.vector
    if ck.metadata.get("condition") == "projected":
        c = ProjectionHead.load(args.heads or DEFAULTS["heads"]).project(c, "vgi")
    return q, c


def cmd_density(args):
    rc = _run_config(args)
    ck = _checkpoint(args.checkpoint, "rfm")
    q, c = _one_condition(args, ck)
    s = Schedule(ck.schedule, ck.t_clamp_min)
    g = density_grid(ck.net, c, args.n_lat, args.n_lon, rc.density_steps, s)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("lat,lon,log_density,solid_angle\n")
        for la, lo, ld, om in zip(g.lat.ravel(), g.lon.ravel(), g.log_density.ravel(), g.solid_angle.ravel()):
            fh.write(f"{la!r},{lo!r},{ld!r},{om!r}\n")
    if args.geojson:
        feats = [{"type": "Feature", "geometry": {"type": "Point", "coordinates": [float(lo), float(la)]},
                  "properties": {"log_density": None if not np.isfinite(ld) else float(ld),
                                 "solid_angle": float(om)}}
                 for la, lo, ld, om in zip(g.lat.ravel(), g.lon.ravel(), g.log_density.ravel(),
                                           g.solid_angle.ravel())]
        _write_json(args.geojson, {"type": "FeatureCollection", "query": q.id, "features": feats})
    print(f"query {q.id}: integral {g.integral():.4f}, argmax {g.argmax()}, failed cells {g.n_failed}")
    return 0


def cmd_localizability(args):
    rc = _run_config(args)
    ck = _checkpoint(args.checkpoint, "rfm")
    q, c = _one_condition(args, ck)
    s = Schedule(ck.schedule, ck.t_clamp_min)
    sc = localizability(ck.net, c, args.samples, rc.density_steps, query_rng(rc.seed, q.id), s,
                        sample_steps=rc.steps)
    print(f"{q.id}: {sc.bits:.4f} +/- {sc.std_error:.4f} bits (n={sc.n_samples})")
    if args.out:
        _write_json(args.out, {"id": q.id, "bits": sc.bits, "std_error": sc.std_error,
                               "n_samples": sc.n_samples})
    return 0


def cmd_retrieve(args):
    rc = _run_config(args)
    gallery = _gallery(args.gallery)
    qs = _select(_queries(args.queries), args.ids)
    heads = _heads(args.heads, qs[0].vector.shape[0])
    region = None
    if args.center is not None:
        if args.radius_km is None:
            raise ConfigError("--center needs --radius-km")
        region = (args.center, args.radius_km)
    out = []
    for q in qs:
        ranked = retrieve_topk(q, gallery, heads, rc.top_k, region)
        if not args.no_rerank:
            ranked = rerank(q, ranked, gallery, heads, min(rc.anchors, len(ranked)), rc.alpha)
        out.append({"id": q.id, "results": [{"id": it.id, "score": it.score, "lat": it.geo.lat_deg,
                                             "lon": it.geo.lon_deg} for it in ranked]})
    _write_json(args.out, out)
    return 0


def _pipeline_inputs(args):
    rc = _run_config(args)
    ck = _checkpoint(args.checkpoint, "rfm")
    gallery = _gallery(args.gallery)
    qs = _select(_queries(args.queries), args.ids)
    heads = _heads(args.heads, qs[0].vector.shape[0])
    pc = ProbGLCConfig(r_km=rc.r_km, rfm_steps=rc.steps, draws=rc.draws, top_k=rc.top_k, n_anchors=rc.anchors,
                       alpha=rc.alpha, localizability_samples=rc.localizability,
                       localizability_steps=rc.density_steps, fallback=rc.fallback,
                       condition=rc.condition, seed=rc.seed)
    return ck, gallery, qs, heads, pc, Schedule(ck.schedule, ck.t_clamp_min)


def _truths(args, qs):
    if args.truth and Path(args.truth).exists():
        t = load_locations(args.truth)
        return [t.get(q.id, q.geo) for q in qs]
    return [q.geo for q in qs]


def cmd_pipeline(args):
    ck, gallery, qs, heads, pc, s = _pipeline_inputs(args)
    res = geolocate_batch(qs, gallery, ck.net, heads, pc, s)
    rep = evaluate([r.final for r in res], _truths(args, qs), split=f"r={pc.r_km:g}km")
    gen = evaluate([r.generative_center for r in res], _truths(args, qs), split="generative")
    report = {"config": {"r_km": _finite(pc.r_km), "alpha": pc.alpha, "anchors": pc.n_anchors,
                         "top_k": pc.top_k, "steps": pc.rfm_steps, "draws": pc.draws, "seed": pc.seed,
                         "fallback": pc.fallback},
              "fused": rep.to_dict(), "generative": gen.to_dict(),
              "n_fallback": sum(r.used_fallback for r in res),
              "queries": [{"id": r.query_id, "lat": r.final.lat_deg, "lon": r.final.lon_deg,
                           "center_lat": r.generative_center.lat_deg, "center_lon": r.generative_center.lon_deg,
                           "top_ids": r.retrieval_list.ids[:5], "used_fallback": r.used_fallback,
                           "n_candidates": r.n_candidates,
                           **({"localizability_bits": r.localizability.bits,
                               "localizability_se": r.localizability.std_error} if r.localizability else {})}
                          for r in res]}
    _write_json(args.out, report)
    if args.predictions:
        write_locations(args.predictions, [r.query_id for r in res], [r.final for r in res])
    acc = ", ".join(f"{k}={v:.3f}" for k, v in rep.to_dict().items() if k.startswith("acc@"))
    print(f"{len(res)} queries, r={pc.r_km:g} km: {acc}, median {rep.median_km:.1f} km")
    return 0


def cmd_sweep(args):
    ck, gallery, qs, heads, pc, s = _pipeline_inputs(args)
    if not args.radii:
        raise ConfigError("--radii needs at least one value")
    rows = threshold_sweep(qs, gallery, ck.net, heads, pc, args.radii, s)
    truths = _truths(args, qs)
    table = []
    for row in rows:
        rep = evaluate([r.final for r in row.results], truths, split=row.report.split)
        table.append({"r_km": _finite(row.r_km), **rep.to_dict(),
                      "mean_candidates": row.mean_candidates, "n_fallback": row.n_fallback})
        print(f"r={row.r_km:>8g} km  acc@1={rep.acc[1.0]:.3f} acc@25={rep.acc[25.0]:.3f} "
              f"median={rep.median_km:.1f} km  candidates={row.mean_candidates:.1f}")
    _write_json(args.out, table)
    return 0


def cmd_eval(args):
    preds = load_locations(args.pred)
    truth = load_locations(args.truth)
    missing = sorted(set(preds) - set(truth))
    if missing:
        raise DataError(f"{len(missing)} prediction id(s) without truth, e.g. {missing[0]!r}")
    ids = sorted(preds)
    rep = evaluate([preds[i] for i in ids], [truth[i] for i in ids], radii=args.radii, split=str(args.pred))
    d = rep.to_dict()
    out = {f"Acc@{k[4:]}": v for k, v in d.items() if k.startswith("acc@")}
    out.update({"Mean Dist": rep.mean_km, "Median Dist": rep.median_km, "n": rep.n})
    _write_json(args.out, out)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    p = Parser(prog="geoflow", description="Probabilistic cross-view geolocalization on the sphere.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=Parser)

    g = sub.add_parser("gen-data", help="write a synthetic clustered world")
    g.add_argument("--out", default=str(DATA_DIR))
    g.add_argument("--clusters", type=int, default=8)
    g.add_argument("--pairs", type=int, default=250, help="pairs per cluster")
    g.add_argument("--kappa", type=float, default=20000.0)
    g.add_argument("--distractors", type=int, default=50, help="far-cluster decoys per cluster")
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--noise-vgi", type=float, default=0.3, dest="noise_vgi")
    g.add_argument("--noise-rsi", type=float, default=0.3, dest="noise_rsi")
    g.add_argument("--onehot", action="store_true", help="one-hot cluster embeddings")
    g.add_argument("--test-fraction", type=float, default=0.2, dest="test_fraction")
    g.add_argument("--fraction-any", action="store_true", dest="fraction_any")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="fit a generative location model")
    t.add_argument("--data", default=str(DEFAULTS["train"]))
    t.add_argument("--out", default=str(DEFAULTS["checkpoint"]))
    t.add_argument("--heads", help="projection heads when condition = projected")
    t.add_argument("--condition", choices=("raw", "projected"))
    _add_config(t)
    _add_model(t)
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("train-retrieval", help="fit InfoNCE projection heads")
    tr.add_argument("--data", default=str(DEFAULTS["train"]))
    tr.add_argument("--out", default=str(DEFAULTS["heads"]))
    tr.add_argument("--dim", type=int, dest="proj_dim")
    tr.add_argument("--tau", type=float)
    tr.add_argument("--steps", type=int, dest="heads_steps")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch-size", type=int, dest="batch_size")
    _add_config(tr)
    tr.set_defaults(func=cmd_train_retrieval)

    i = sub.add_parser("infer", help="point predictions from a checkpoint")
    i.add_argument("--checkpoint", default=str(DEFAULTS["checkpoint"]))
    i.add_argument("--queries", default=str(DEFAULTS["test"]))
    i.add_argument("--heads")
    i.add_argument("--ids", nargs="*")
    i.add_argument("--method", choices=("ddpm", "fm", "rfm"), help="assert the checkpoint method")
    i.add_argument("--out", default="predictions.csv")
    _add_config(i)
    _add_sampling(i)
    i.set_defaults(func=cmd_infer)

    d = sub.add_parser("density", help="log-density grid for one query")
    d.add_argument("--checkpoint", default=str(DEFAULTS["checkpoint"]))
    d.add_argument("--queries", default=str(DEFAULTS["test"]))
    d.add_argument("--heads")
    d.add_argument("--id", help="query id (default: first)")
    d.add_argument("--n-lat", type=int, default=72, dest="n_lat")
    d.add_argument("--n-lon", type=int, default=144, dest="n_lon")
    d.add_argument("--steps", type=int, dest="density_steps")
    d.add_argument("--out", default="density.csv")
    d.add_argument("--geojson")
    _add_config(d)
    d.set_defaults(func=cmd_density)

    lz = sub.add_parser("localizability", help="negative entropy in bits for one query")
    lz.add_argument("--checkpoint", default=str(DEFAULTS["checkpoint"]))
    lz.add_argument("--queries", default=str(DEFAULTS["test"]))
    lz.add_argument("--heads")
    lz.add_argument("--id")
    lz.add_argument("--samples", type=int, default=10_000)
    lz.add_argument("--density-steps", type=int, dest="density_steps")
    lz.add_argument("--steps", type=int, help="sampler steps")
    lz.add_argument("--out")
    _add_config(lz)
    lz.set_defaults(func=cmd_localizability)

    r = sub.add_parser("retrieve", help="cosine retrieval with optional region and reranking")
    r.add_argument("--gallery", default=str(DEFAULTS["gallery"]))
    r.add_argument("--queries", default=str(DEFAULTS["test"]))
    r.add_argument("--heads", default=str(DEFAULTS["heads"]))
    r.add_argument("--ids", nargs="*")
    r.add_argument("--k", type=int, dest="top_k")
    r.add_argument("--center", type=_latlon, help="LAT,LON")
    r.add_argument("--radius-km", type=_radius, dest="radius_km")
    r.add_argument("--alpha", type=float)
    r.add_argument("--anchors", type=int)
    r.add_argument("--no-rerank", action="store_true", dest="no_rerank")
    r.add_argument("--out", default="-")
    _add_config(r)
    r.set_defaults(func=cmd_retrieve)

    for name, fn, helptext in (("pipeline", cmd_pipeline, "generative center + radius retrieval + rerank"),
                               ("sweep", cmd_sweep, "pipeline over several radius thresholds")):
        pp = sub.add_parser(name, help=helptext)
        pp.add_argument("--gallery", default=str(DEFAULTS["gallery"]))
        pp.add_argument("--queries", default=str(DEFAULTS["test"]))
        pp.add_argument("--checkpoint", default=str(DEFAULTS["checkpoint"]))
        pp.add_argument("--heads", default=str(DEFAULTS["heads"]))
        pp.add_argument("--truth", default=str(DEFAULTS["truth"]))
        pp.add_argument("--ids", nargs="*")
        pp.add_argument("--out", default=f"{name}_report.json")
        _add_config(pp)
        _add_sampling(pp)
        _add_fusion(pp)
        if name == "pipeline":
            pp.add_argument("--predictions", help="also write a predictions CSV")
        else:
            pp.add_argument("--radii", type=_floats, default=[1.0, 25.0, 50.0, 200.0, 750.0])
        pp.set_defaults(func=fn)

    e = sub.add_parser("eval", help="Acc@K and distance stats for a predictions file")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--radii", type=_floats, default=[1.0, 25.0, 50.0, 200.0])
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except GeoflowError as exc:
        print(f"geoflow: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"geoflow: error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"geoflow: numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
