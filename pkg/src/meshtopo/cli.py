"""Command line interface.

One subcommand per pipeline stage; every command prints a single JSON
document to stdout and keeps diagnostics on stderr. Exit codes: 0 on
success, 2 for usage and input problems (missing files, unparseable data,
invalid geometry), 3 when a numeric step fails (the message names the step).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bpt, metrics, preference, seam, uv
from .errors import DomainError, MeshTopoError, MetricError, NumericError, ParseError
from .mdpo import (
    MDPOConfig,
    ToyARModel,
    TrainState,
    condition_embedding,
    generate,
    load_checkpoint,
    mdpo_step,
    pretrain_step,
    save_checkpoint,
)
from .mesh import Mesh, canonicalize, load_obj, load_xyz, normalize_unit_cube, save_obj

__all__ = ["main", "build_parser"]


def _mesh_id(path, override=None) -> str:
    return override if override else Path(path).stem


def _say(msg) -> None:
    print(msg, file=sys.stderr)


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _finite_summary(values) -> dict:
    finite = [v for v in values if np.isfinite(v)]
    return {
        "faces": len(values),
        "finite": len(finite),
        "infinite": len(values) - len(finite),
        "mean": float(np.mean(finite)) if finite else None,
        "max": float(np.max(finite)) if finite else None,
    }


# ---------------------------------------------------------------------------
# tokenize / detokenize


def cmd_tokenize(args) -> dict:
    mesh = load_obj(args.mesh)
    if args.normalize:
        mesh = normalize_unit_cube(mesh)
    canonical = canonicalize(mesh)
    seq = bpt.encode(canonical)
    rid = _mesh_id(args.mesh, args.id)
    ratio = bpt.compression_ratio(seq)
    if args.out:
        bpt.write_token_records([(rid, seq)], args.out)
    payload = {
        "id": rid,
        "vertices": canonical.vertex_count,
        "faces": canonical.face_count,
        "patches": len(seq.patch_spans),
        "tokens": len(seq.tokens),
        "ratio_exact": f"{ratio.numerator}/{ratio.denominator}",
        "ratio": float(ratio),
    }
    if not args.out:
        payload["token_list"] = list(seq.tokens)
    return payload


def cmd_detokenize(args) -> list:
    records = bpt.read_token_records(args.tokens)
    if args.id is not None:
        records = [(rid, seq) for rid, seq in records if rid == args.id]
        if not records:
            raise DomainError(f"no record with id {args.id!r} in {args.tokens}")
    out = Path(args.out)
    single_file = out.suffix.lower() == ".obj"
    if single_file and len(records) > 1:
        raise DomainError(
            f"{len(records)} records but one output file; pass --id or a directory"
        )
    results = []
    for rid, seq in records:
        mesh = bpt.decode(seq)
        dest = out if single_file else out / f"{rid}.obj"
        if not single_file:
            out.mkdir(parents=True, exist_ok=True)
        save_obj(mesh, dest)
        results.append(
            {
                "id": rid,
                "vertices": mesh.vertex_count,
                "faces": mesh.face_count,
                "file": str(dest),
            }
        )
    return results


# ---------------------------------------------------------------------------
# evaluate / rank / mask


def cmd_evaluate(args) -> list:
    cloud = load_xyz(args.cloud)

    def one(path):
        mesh = load_obj(path)
        return metrics.evaluate(
            mesh,
            cloud,
            mesh_id=_mesh_id(path, None),
            samples=args.samples,
            seed=args.seed,
        )

    if args.threads > 1 and len(args.mesh) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(one, args.mesh))
    else:
        reports = [one(p) for p in args.mesh]

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for rep in reports:
                fh.write(metrics.report_to_json(rep) + "\n")
    return [
        {"id": r.id, "ber": r.ber, "ts": r.ts, "hd": r.hd} for r in reports
    ]


def cmd_rank(args) -> dict:
    reports = metrics.read_reports(args.reports)
    candidates = preference.CandidateSet(
        cond_id=args.cond, entries=tuple((r.id, r) for r in reports)
    )
    triplets = preference.build_triplets(candidates)
    n = len(reports)
    pairs = n * (n - 1) // 2
    _say(f"{len(triplets)} triplets from {pairs} pairs")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for t in triplets:
                fh.write(
                    json.dumps(
                        {"cond": t.cond_id, "winner": t.winner_id, "loser": t.loser_id}
                    )
                    + "\n"
                )
    return {
        "cond": args.cond,
        "candidates": n,
        "pairs": pairs,
        "triplets": len(triplets),
        "list": [[t.winner_id, t.loser_id] for t in triplets],
    }


def cmd_mask(args) -> list:
    records = bpt.read_token_records(args.tokens)
    if args.id is not None:
        records = [(rid, seq) for rid, seq in records if rid == args.id]
        if not records:
            raise DomainError(f"no record with id {args.id!r} in {args.tokens}")
    mesh = load_obj(args.mesh) if args.mesh else None
    cfg = preference.MaskConfig(tau_quad=args.tau_quad, tau_topo=args.tau_topo)
    rows = []
    masks = []
    for rid, seq in records:
        mask = preference.mask_phi(seq, mesh=mesh, cfg=cfg)
        bits = list(mask.bits)
        masks.append({"id": rid, "mask": bits})
        rows.append({"id": rid, "length": len(bits), "ones": sum(bits)})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for doc in masks:
                fh.write(json.dumps(doc) + "\n")
    return rows


# ---------------------------------------------------------------------------
# train / generate


def _resolve_condition(rec_id, cond_dir, cond_dim) -> np.ndarray:
    if cond_dir:
        path = Path(cond_dir) / f"{rec_id}.xyz"
        if path.exists():
            cloud = load_xyz(path)
            return condition_embedding(cloud.points, dim=cond_dim).as_array()
    return np.zeros(cond_dim)


def _clip_tokens(tokens, context, clipped_counter) -> list:
    limit = context - 1
    if len(tokens) > limit:
        clipped_counter.append(1)
        return list(tokens)[:limit]
    return list(tokens)


def _write_log(path, rows) -> None:
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def cmd_train(args) -> dict:
    if args.mode == "pretrain":
        return _train_pretrain(args)
    return _train_mdpo(args)


def _train_pretrain(args) -> dict:
    if args.tokens is None or args.vocab is None:
        raise DomainError("pretrain needs --tokens and --vocab")
    if args.init:
        model = load_checkpoint(args.init)
    else:
        if args.seed is None:
            raise DomainError("--seed is required when training from scratch")
        model = ToyARModel.init(
            args.vocab,
            embed_dim=args.embed_dim,
            context=args.context,
            cond_dim=args.cond_dim,
            seed=args.seed,
        )
    records = bpt.read_token_records(args.tokens)
    clipped = []
    batch = [
        (
            _clip_tokens(seq.tokens, model.context, clipped),
            _resolve_condition(rid, args.cond_dir, model.cond_dim),
        )
        for rid, seq in records
    ]
    if clipped:
        _say(f"clipped {len(clipped)} sequences to the context window")

    state = TrainState(model)
    log_rows = []
    first = last = None
    for _ in range(args.steps):
        state, loss = pretrain_step(state, batch, lr=args.lr)
        if first is None:
            first = loss
        last = loss
        log_rows.append({"step": state.step, "loss": loss, "margin": None})
    _write_log(args.log, log_rows)
    save_checkpoint(state.model, args.checkpoint)
    return {
        "mode": "pretrain",
        "sequences": len(batch),
        "steps": args.steps,
        "initial_loss": first,
        "final_loss": last,
        "checkpoint": str(args.checkpoint),
    }


def _train_mdpo(args) -> dict:
    if args.triplets is None or args.reference is None:
        raise DomainError("mdpo needs --triplets and --reference")
    reference = load_checkpoint(args.reference)
    model = load_checkpoint(args.policy) if args.policy else reference.copy()
    triplets = preference.read_training_triplets(args.triplets)
    clipped = []
    batch = []
    for trip in triplets:
        win = _clip_tokens(trip.win_tokens, model.context, clipped)
        lose = _clip_tokens(trip.lose_tokens, model.context, clipped)
        trimmed = preference.TrainingTriplet(
            cond=trip.cond,
            win_tokens=tuple(win),
            win_mask=preference.MaskVector(tuple(trip.win_mask.bits)[: len(win)]),
            lose_tokens=tuple(lose),
            lose_mask=preference.MaskVector(tuple(trip.lose_mask.bits)[: len(lose)]),
        )
        cond = _resolve_condition(trip.cond, args.cond_dir, model.cond_dim)
        batch.append((trimmed, cond))
    if clipped:
        _say(f"clipped {len(clipped)} sequences to the context window")

    cfg = MDPOConfig(beta=args.beta)
    state = TrainState(model)
    log_rows = []
    first_loss = last_loss = last_margin = None
    for _ in range(args.steps):
        state, loss, margin = mdpo_step(state, reference, batch, lr=args.lr, cfg=cfg)
        if first_loss is None:
            first_loss = loss
        last_loss, last_margin = loss, margin
        log_rows.append({"step": state.step, "loss": loss, "margin": margin})
    _write_log(args.log, log_rows)
    save_checkpoint(state.model, args.checkpoint)
    return {
        "mode": "mdpo",
        "triplets": len(batch),
        "steps": args.steps,
        "beta": args.beta,
        "initial_loss": first_loss,
        "final_loss": last_loss,
        "final_margin": last_margin,
        "checkpoint": str(args.checkpoint),
    }


def cmd_generate(args) -> dict:
    model = load_checkpoint(args.checkpoint)
    if args.cond_cloud:
        cloud = load_xyz(args.cond_cloud)
        cond = condition_embedding(cloud.points, dim=model.cond_dim).as_array()
    else:
        cond = np.zeros(model.cond_dim)
    tokens = generate(
        model,
        cond,
        max_tokens=args.max_tokens,
        seed=args.seed,
        end_token=args.end_token,
    )
    rid = args.id or "generated"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"id": rid, "tokens": tokens}) + "\n")
    return {"id": rid, "count": len(tokens), "tokens": tokens}


# ---------------------------------------------------------------------------
# seam pipeline


def cmd_seam_encode(args) -> dict:
    seq = seam.order_seams(seam.load_seam_txt(args.segments))
    tokens = seam.encode_seam(seq)
    rid = args.id or Path(args.segments).stem
    if args.out:
        seam.write_seam_records([(rid, tokens)], args.out)
    payload = {"id": rid, "segments": len(seq), "tokens": len(tokens)}
    if args.mesh:
        mesh = load_obj(args.mesh)
        ratio = seam.seam_ratio(len(seq), mesh.vertex_count)
        payload["ratio"] = ratio
        payload["ratio_in_range"] = seam.ratio_in_range(ratio)
    if not args.out:
        payload["token_list"] = tokens
    return payload


def cmd_seam_decode(args) -> dict:
    records = seam.read_seam_records(args.tokens)
    if args.id is not None:
        records = [(rid, toks) for rid, toks in records if rid == args.id]
    if len(records) != 1:
        raise DomainError(
            f"expected exactly one seam record, found {len(records)}; pass --id"
        )
    rid, tokens = records[0]
    seq = seam.decode_seam(tokens)
    seam.save_seam_txt(seq, args.out)
    return {"id": rid, "segments": len(seq), "file": str(args.out)}


def cmd_seam_cut(args) -> dict:
    mesh = load_obj(args.mesh)
    segments = seam.order_seams(seam.load_seam_txt(args.segments))
    current = mesh
    total_cut = 0
    total_skipped = 0
    total_new = 0
    degenerate = 0
    for seg in segments:
        ends = uv.snap_to_mesh(current, [seg.head, seg.tail])
        if ends[0] == ends[1]:
            degenerate += 1
            continue
        path = uv.geodesic_connect(current, int(ends[0]), int(ends[1]))
        current, report = uv.cut_mesh(current, path)
        total_cut += len(report.cut_edges)
        total_skipped += len(report.skipped_edges)
        total_new += len(report.duplicates)
    save_obj(current, args.out)
    return {
        "segments": len(segments),
        "snapped_identical": degenerate,
        "cut_edges": total_cut,
        "skipped_edges": total_skipped,
        "new_vertices": total_new,
        "vertices": current.vertex_count,
        "faces": current.face_count,
        "file": str(args.out),
    }


def cmd_seam_flatten(args) -> dict:
    mesh = load_obj(args.mesh)
    charts = uv.extract_charts(mesh)
    rows = []
    for i, chart in enumerate(charts):
        row = {
            "index": i,
            "faces": chart.mesh.face_count,
            "vertices": chart.mesh.vertex_count,
            "is_disk": chart.is_disk,
            "file": None,
            "flipped": None,
            "distortion": None,
        }
        if chart.is_disk:
            result = uv.flatten_chart(chart)
            dist = uv.face_distortion(chart.mesh, result.uv)
            dest = f"{args.out_prefix}_{i:03d}.obj"
            save_obj(chart.mesh, dest, uv=result.uv)
            row["file"] = dest
            row["flipped"] = len(result.flipped_faces)
            row["distortion"] = _finite_summary(list(dist))
        else:
            _say(f"chart {i} is not a disk; skipped")
        rows.append(row)
    return {"charts": rows}


def _load_obj_uv(path):
    """Read an OBJ with vt records back as (mesh, per-vertex uv)."""
    verts = []
    uvs = []
    faces = []
    uv_of_vertex = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi = int(fields[0]) - 1
                    idx.append(vi)
                    if len(fields) > 1 and fields[1]:
                        uv_of_vertex[vi] = int(fields[1]) - 1
                faces.append(tuple(idx))
    if not uvs or len(uv_of_vertex) < len(verts):
        raise ParseError("mesh has no complete uv assignment", path=path)
    mesh = Mesh(np.array(verts), tuple(faces), name=Path(path).stem)
    uv_arr = np.zeros((len(verts), 2))
    for vi, ti in uv_of_vertex.items():
        uv_arr[vi] = uvs[ti]
    return mesh, uv_arr


def cmd_seam_distort(args) -> dict:
    mesh, uv_arr = _load_obj_uv(args.mesh)
    dist = uv.face_distortion(mesh, uv_arr)
    return _finite_summary(list(dist))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshtopo",
        description="mesh tokenization, topology quality, preference training, seams",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="worker threads for batch stages (results keep input order)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="canonicalize a mesh and emit its tokens")
    p.add_argument("--mesh", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--out", default=None, help="token record JSONL destination")
    p.add_argument(
        "--normalize", action="store_true", help="fit the mesh into the unit cube first"
    )
    p.set_defaults(handler=cmd_tokenize)

    p = sub.add_parser("detokenize", help="rebuild meshes from token records")
    p.add_argument("--tokens", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--out", required=True, help="output .obj file or directory")
    p.set_defaults(handler=cmd_detokenize)

    p = sub.add_parser("evaluate", help="score meshes against a reference cloud")
    p.add_argument("--mesh", required=True, nargs="+")
    p.add_argument("--cloud", required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report JSONL destination")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("rank", help="order candidate reports into preference triplets")
    p.add_argument("--reports", required=True)
    p.add_argument("--cond", default="default", help="condition id for the set")
    p.add_argument("--out", default=None, help="triplet JSONL destination")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("mask", help="token quality masks from patch shape")
    p.add_argument("--tokens", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--mesh", default=None, help="cross-check mesh")
    p.add_argument("--tau-quad", type=float, default=0.8)
    p.add_argument("--tau-topo", type=float, default=0.5)
    p.add_argument("--out", default=None, help="mask JSONL destination")
    p.set_defaults(handler=cmd_mask)

    p = sub.add_parser("train", help="fit the toy scorer")
    p.add_argument("--mode", required=True, choices=["pretrain", "mdpo"])
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log", default=None, help="JSONL step log destination")
    p.add_argument("--cond-dir", default=None, help="directory of <id>.xyz clouds")
    # pretrain
    p.add_argument("--tokens", default=None, help="pretrain corpus (token records)")
    p.add_argument("--vocab", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--context", type=int, default=64)
    p.add_argument("--cond-dim", type=int, default=32)
    p.add_argument("--init", default=None, help="checkpoint to continue from")
    # mdpo
    p.add_argument("--triplets", default=None, help="training triplet JSONL")
    p.add_argument("--reference", default=None, help="frozen reference checkpoint")
    p.add_argument("--policy", default=None, help="policy init checkpoint")
    p.add_argument("--beta", type=float, default=0.1)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("generate", help="sample tokens from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-tokens", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cond-cloud", default=None, help="conditioning .xyz cloud")
    p.add_argument("--end-token", type=int, default=None)
    p.add_argument("--id", default=None)
    p.add_argument("--out", default=None, help="token JSONL destination")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("seam", help="seam encoding and uv flattening")
    seam_sub = p.add_subparsers(dest="action", required=True)

    q = seam_sub.add_parser("encode", help="seam segments to tokens")
    q.add_argument("--segments", required=True, help="plain text seam file")
    q.add_argument("--id", default=None)
    q.add_argument("--mesh", default=None, help="mesh for the density ratio")
    q.add_argument("--out", default=None)
    q.set_defaults(handler=cmd_seam_encode)

    q = seam_sub.add_parser("decode", help="tokens back to seam segments")
    q.add_argument("--tokens", required=True)
    q.add_argument("--id", default=None)
    q.add_argument("--out", required=True)
    q.set_defaults(handler=cmd_seam_decode)

    q = seam_sub.add_parser("cut", help="cut a mesh open along seams")
    q.add_argument("--mesh", required=True)
    q.add_argument("--segments", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(handler=cmd_seam_cut)

    q = seam_sub.add_parser("flatten", help="flatten disk charts to uv")
    q.add_argument("--mesh", required=True)
    q.add_argument("--out-prefix", required=True)
    q.set_defaults(handler=cmd_seam_flatten)

    q = seam_sub.add_parser("distort", help="uv distortion of a flattened chart")
    q.add_argument("--mesh", required=True, help="OBJ with vt records")
    q.set_defaults(handler=cmd_seam_distort)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.handler(args)
    except (NumericError, MetricError) as e:
        _say(f"error: {e}")
        return 3
    except (MeshTopoError, OSError) as e:
        _say(f"error: {e}")
        return 2
    _emit(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
