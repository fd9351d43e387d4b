"""Pipeline driver: synth, warp, strips, features, adapt-train, eval, annotate.

Flags take precedence over a TOML config file, which takes precedence over
built-in defaults. Every command writes a run manifest next to its outputs.
Exit codes: 0 ok, 2 usage, 3 input format, 4 numeric failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import click
import cv2
import numpy as np

from . import __version__, adaptation, descriptor, evaluation, features, strips
from .annotation import cuboid_from_export
from .errors import EcoError
from .geometry import load_bundle
from .manifest import write_manifest
from .rectify import (
    BehindCameraError,
    DegenerateOrientationError,
    build_face_warp,
    save_warpspec,
    warp_image,
    warped_face_polygon,
)
from .synthetic import CATEGORIES, DEFAULT_INTRINSICS, emit, generate


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EcoError as e:
            click.echo(f"error: {type(e).__name__}: {e}", err=True)
            sys.exit(e.exit_code)
        except FileNotFoundError as e:
            click.echo(f"error: missing file: {e}", err=True)
            sys.exit(3)
    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="eco")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="TOML config file; flags override its values.")
@click.pass_context
def main(ctx, config):
    """Egocentric scene toolkit."""
    if config:
        with open(config, "rb") as fh:
            ctx.default_map = tomllib.load(fh)


@main.command()
@click.option("--preset", type=click.Choice(["single-face", "aisle", "orbit"]),
              required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--frames", "n_frames", type=int, default=None,
              help="override the preset frame count")
@click.option("--out", "outdir", type=click.Path(), required=True)
@handle_errors
def synth(preset, seed, n_frames, outdir):
    """Generate an oracle scene: frames, bundle, labels, and ground truth."""
    scene = generate(preset, seed, n_frames=n_frames)
    emit(scene, outdir)
    outdir = Path(outdir)
    outputs = sorted(p for p in outdir.iterdir() if p.name != "manifest.json")
    write_manifest(outdir / "manifest.json", "synth",
                   {"preset": preset, "frames": n_frames}, [], outputs, seed=seed)
    click.echo(f"wrote {len(scene.poses)} frames to {outdir}")


def _load_labels(path):
    with open(path) as fh:
        data = json.load(fh)
    boxes = [(entry.get("id", i), entry.get("category", ""),
              cuboid_from_export(entry)) for i, entry in enumerate(data["boxes"])]
    return data.get("store", "store0"), boxes


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--out", "outdir", type=click.Path(), required=True)
@handle_errors
def warp(bundle_path, labels_path, outdir):
    """Frontalize and scale every visible vertical labeled face."""
    bundle = load_bundle(bundle_path)
    store, boxes = _load_labels(labels_path)
    outdir = Path(outdir)
    (outdir / "warped").mkdir(parents=True, exist_ok=True)
    bundle_dir = Path(bundle_path).parent
    entries = []
    outputs = []
    for frame in bundle.frames:
        image = cv2.imread(str(bundle_dir / frame.image_path))
        if image is None:
            continue
        for box_id, category, box in boxes:
            gravity = box.axes.gravity
            for face in ("+x", "-x", "+y", "-y"):
                idxs = box.face_corner_indices(face)
                corners = box.corners()[idxs]
                center = corners.mean(axis=0)
                if box.face_normal(face) @ (center - frame.pose.C) >= 0:
                    continue
                # reorder to BL,BR,TR,TL with the first edge horizontal
                quad = _face_quad_ordered(corners, gravity)
                from .rectify import CuboidFace
                cface = CuboidFace.from_corners(quad)
                try:
                    spec = build_face_warp(bundle.intrinsics, frame.pose, cface, gravity)
                except (BehindCameraError, DegenerateOrientationError):
                    continue
                warped = warp_image(image, spec.W, spec.canvas_size)
                poly = warped_face_polygon(spec, bundle.intrinsics, frame.pose, cface)
                stem = f"{frame.id}_box{box_id}_{face.replace('+', 'p').replace('-', 'm')}"
                img_path = outdir / "warped" / f"{stem}.png"
                cv2.imwrite(str(img_path), warped)
                save_warpspec(spec, outdir / "warped" / f"{stem}.warp.json")
                x0, y0 = np.floor(poly.min(axis=0)).astype(int)
                x1, y1 = np.ceil(poly.max(axis=0)).astype(int)
                entries.append({
                    "id": stem,
                    "image": f"warped/{stem}.png",
                    "frame": frame.id,
                    "box": box_id,
                    "face": face,
                    "category": category,
                    "store": store,
                    "rect": [max(int(x0), 0), max(int(y0), 0),
                             min(int(x1), spec.canvas_size[0]),
                             min(int(y1), spec.canvas_size[1])],
                    "corners_3d": [[float(x) for x in c] for c in quad],
                    "camera": [float(x) for x in frame.pose.C],
                })
                outputs.extend([img_path, outdir / "warped" / f"{stem}.warp.json"])
    with open(outdir / "faces.json", "w") as fh:
        json.dump({"faces": entries}, fh, indent=1, sort_keys=True)
    write_manifest(outdir / "manifest.json", "warp", {},
                   [bundle_path, labels_path],
                   sorted(map(str, outputs)) + [str(outdir / "faces.json")])
    click.echo(f"warped {len(entries)} faces to {outdir}")


def _face_quad_ordered(corners, gravity):
    """Order 4 coplanar corners as BL, BR, TR, TL with gravity pointing down."""
    center = corners.mean(axis=0)
    up = -np.asarray(gravity, dtype=float)
    heights = (corners - center) @ up
    top = corners[heights > 0]
    bottom = corners[heights <= 0]
    edge = top[1] - top[0]
    horiz = edge / np.linalg.norm(edge)
    bl, br = sorted(bottom, key=lambda c: float(c @ horiz))
    tl, tr = sorted(top, key=lambda c: float(c @ horiz))
    return np.array([bl, br, tr, tl])


@main.command(name="strips")
@click.option("--in", "indir", type=click.Path(exists=True), required=True,
              help="warp output directory")
@click.option("--width", type=int, default=strips.DEFAULT_STRIP_WIDTH,
              show_default=True)
@click.option("--out", "outdir", type=click.Path(), required=True)
@handle_errors
def strips_cmd(indir, width, outdir):
    """Extract and normalize uniform-width vertical strips."""
    indir = Path(indir)
    outdir = Path(outdir)
    with open(indir / "faces.json") as fh:
        face_entries = json.load(fh)["faces"]
    manifest: dict[str, dict] = {}
    outputs = []
    strip_id = 0
    for entry in sorted(face_entries, key=lambda e: e["id"]):
        image = cv2.imread(str(indir / entry["image"]))
        if image is None:
            continue
        x0, y0, x1, y1 = entry["rect"]
        raws = strips.extract_strips(image, (x0, y0, x1, y1), width)
        corners = np.asarray(entry["corners_3d"])
        camera = np.asarray(entry["camera"])
        bl, br, tr, tl = corners
        n = len(raws)
        for theta, raw in enumerate(raws):
            normalized = strips.normalize_strip(raw)
            rel = Path("strips") / entry["store"] / entry["category"]
            (outdir / rel).mkdir(parents=True, exist_ok=True)
            name = f"{entry['frame']}_{entry['id']}_{theta}.png"
            cv2.imwrite(str(outdir / rel / name), normalized)
            # strip slab centroid on the face, for proximity weights
            frac = (theta + 0.5) * width / max(x1 - x0, 1)
            centroid = bl + frac * (br - bl) + 0.5 * (tl - bl)
            manifest[str(strip_id)] = {
                "path": str(rel / name),
                "store": entry["store"],
                "category": entry["category"],
                "frame": entry["frame"],
                "face": entry["id"],
                "theta": theta,
                "r": float(np.linalg.norm(centroid - camera)),
                "world_width": float(np.linalg.norm(br - bl) / n) if n else 0.0,
            }
            outputs.append(outdir / rel / name)
            strip_id += 1
    with open(outdir / "strips.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    write_manifest(outdir / "manifest.json", "strips", {"width": width},
                   [indir / "faces.json"],
                   sorted(map(str, outputs)) + [str(outdir / "strips.json")])
    click.echo(f"extracted {strip_id} strips to {outdir}")


@main.command(name="features")
@click.option("--extractor", type=click.Choice(["baseline", "import"]),
              default="baseline", show_default=True)
@click.option("--in", "inpath", type=click.Path(exists=True), required=True,
              help="strips directory (baseline) or ECOF file (import)")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              default=None, help="strip manifest JSON for import joins")
@click.option("--dim", type=int, default=features.DEFAULT_DIM, show_default=True)
@click.option("--out", "outfile", type=click.Path(), required=True)
@handle_errors
def features_cmd(extractor, inpath, manifest_path, dim, outfile):
    """Compute baseline features or import externally computed ones."""
    inpath = Path(inpath)
    outfile = Path(outfile)
    outfile.parent.mkdir(parents=True, exist_ok=True)
    if extractor == "baseline":
        with open(inpath / "strips.json") as fh:
            strip_manifest = json.load(fh)
        vectors = []
        means_acc = np.zeros(3)
        count = 0
        for sid in sorted(strip_manifest, key=int):
            meta = strip_manifest[sid]
            img = cv2.imread(str(inpath / meta["path"]))[:, :, ::-1]
            means_acc += img.reshape(-1, 3).mean(axis=0)
            count += 1
            vec = features.extract_baseline(img, dim=dim)
            vectors.append(features.FeatureVector(values=vec, strip_id=int(sid),
                                                  category=meta["category"]))
        features.write_features(outfile, vectors)
        meta_out = {str(v.strip_id): strip_manifest[str(v.strip_id)] for v in vectors}
        with open(str(outfile) + ".json", "w") as fh:
            json.dump(meta_out, fh, indent=1, sort_keys=True)
        config = {"extractor": "baseline", "dim": dim,
                  "channel_means": [float(x) for x in means_acc / max(count, 1)]}
        write_manifest(str(outfile) + ".manifest.json", "features", config,
                       [inpath / "strips.json"], [outfile, str(outfile) + ".json"])
        click.echo(f"wrote {len(vectors)} baseline features to {outfile}")
    else:
        strip_manifest = None
        if manifest_path:
            with open(manifest_path) as fh:
                strip_manifest = json.load(fh)
        vectors, unmatched = features.import_features(inpath, strip_manifest)
        if vectors and len(vectors[0].values) != dim:
            raise features.DimensionMismatchError(
                f"file dim {len(vectors[0].values)} != requested {dim}")
        features.write_features(outfile, vectors)
        if strip_manifest is not None:
            meta_out = {str(v.strip_id): strip_manifest[str(v.strip_id)]
                        for v in vectors if str(v.strip_id) in strip_manifest}
            with open(str(outfile) + ".json", "w") as fh:
                json.dump(meta_out, fh, indent=1, sort_keys=True)
        write_manifest(str(outfile) + ".manifest.json", "features",
                       {"extractor": "import", "dim": dim,
                        "unmatched": [int(u) for u in unmatched]},
                       [inpath], [outfile])
        click.echo(f"imported {len(vectors)} features "
                   f"({len(unmatched)} unmatched) to {outfile}")


@main.command(name="adapt-train")
@click.option("--train", "train_path", type=click.Path(exists=True), required=True)
@click.option("--test", "test_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--weight-decay", type=float, default=1.0, show_default=True)
@click.option("--batch", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hidden", type=int, default=2048, show_default=True)
@click.option("--out", "outfile", type=click.Path(), required=True)
@handle_errors
def adapt_train(train_path, test_path, alpha, weight_decay, batch, lr, steps,
                seed, hidden, outfile):
    """Train the adversarial residual adapter between two feature sets."""
    train_vecs = features.read_features(train_path)
    test_vecs = features.read_features(test_path)
    X_train = np.stack([v.values for v in train_vecs])
    X_test = np.stack([v.values for v in test_vecs])
    config = adaptation.TrainingConfig(
        batch_size=batch, alpha=alpha, weight_decay=weight_decay,
        learning_rate=lr, iterations=steps, seed=seed, hidden=hidden)
    model, history = adaptation.train(X_train, X_test, config)
    adaptation.save_model(model, outfile, manifest={
        "config": {
            "batch_size": batch, "alpha": alpha, "weight_decay": weight_decay,
            "learning_rate": lr, "iterations": steps, "seed": seed,
            "hidden": hidden, "momentum": config.momentum,
            "d_steps": config.d_steps,
        },
        "loss_curve": [[float(a), float(b)] for a, b in history],
    })
    write_manifest(str(outfile) + ".manifest.json", "adapt-train",
                   {"alpha": alpha, "weight_decay": weight_decay, "batch": batch,
                    "lr": lr, "steps": steps, "hidden": hidden},
                   [train_path, test_path], [outfile, str(outfile) + ".json"],
                   seed=seed)
    click.echo(f"trained adapter saved to {outfile} "
               f"(final D loss {history[-1][0]:.4f}, F/G loss {history[-1][1]:.4f})")


@main.group(name="eval")
def eval_group():
    """Retrieval and classification evaluation."""


def _load_corpus(path):
    vecs = features.read_features(path)
    meta_path = Path(str(path) + ".json")
    labels = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            labels = json.load(fh)
    return evaluation.LabeledCorpus(
        vectors=np.stack([v.values for v in vecs]),
        labels=[labels.get(str(v.strip_id), {}).get("category", "unknown")
                for v in vecs],
        ids=[v.strip_id for v in vecs],
        stores=[labels.get(str(v.strip_id), {}).get("store", "") for v in vecs],
    )


def _compose_scenes(corpus, labels_meta):
    """Group strips by frame and compose one descriptor per frame."""
    groups: dict[tuple, list[int]] = {}
    for i, sid in enumerate(corpus.ids):
        meta = labels_meta.get(str(sid), {})
        key = (meta.get("store", ""), meta.get("frame", str(sid)),
               meta.get("category", corpus.labels[i]))
        groups.setdefault(key, []).append(i)
    vectors, labels, ids = [], [], []
    for scene_id, (key, idxs) in enumerate(sorted(groups.items())):
        desc = descriptor.compose([corpus.vectors[i] for i in idxs],
                                  [1.0] * len(idxs))
        vectors.append(desc.values)
        labels.append(key[2])
        ids.append(scene_id)
    return evaluation.LabeledCorpus(vectors=np.stack(vectors), labels=labels, ids=ids)


@eval_group.command(name="recall")
@click.option("--query", "query_path", type=click.Path(exists=True), required=True)
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--adapter", "adapter_path", type=click.Path(exists=True), default=None)
@click.option("--kmax", type=int, default=10, show_default=True)
@click.option("--metric", type=click.Choice(["euclidean", "cosine"]),
              default="euclidean", show_default=True)
@click.option("--per-scene", is_flag=True,
              help="compose strips per frame before retrieval")
@click.option("--out", "outfile", type=click.Path(), required=True)
@handle_errors
def eval_recall(query_path, db_path, adapter_path, kmax, metric, per_scene, outfile):
    """Nearest-neighbor recall@k per category."""
    queries = _load_corpus(query_path)
    db = _load_corpus(db_path)
    if adapter_path:
        model = adaptation.load_model(adapter_path)
        queries.vectors = model.adapt(queries.vectors)
    if per_scene:
        def _meta(path):
            p = Path(str(path) + ".json")
            return json.load(open(p)) if p.exists() else {}
        queries = _compose_scenes(queries, _meta(query_path))
        db = _compose_scenes(db, _meta(db_path))
    curves = evaluation.recall_curve(queries, db, kmax, metric)
    evaluation.write_recall_csv(outfile, curves)
    inputs = [query_path, db_path] + ([adapter_path] if adapter_path else [])
    write_manifest(str(outfile) + ".manifest.json", "eval recall",
                   {"kmax": kmax, "metric": metric, "per_scene": per_scene},
                   inputs, [outfile])
    click.echo(f"recall curve written to {outfile}")


@eval_group.command(name="classify")
@click.option("--train", "train_path", type=click.Path(exists=True), required=True)
@click.option("--test", "test_path", type=click.Path(exists=True), required=True)
@click.option("--l2", "l2_weight", type=float, default=1e-4, show_default=True)
@click.option("--steps", type=int, default=5000, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "outfile", type=click.Path(), required=True)
@handle_errors
def eval_classify(train_path, test_path, l2_weight, steps, lr, seed, outfile):
    """Train the softmax strip classifier and report per-category accuracy."""
    train_corpus = _load_corpus(train_path)
    test_corpus = _load_corpus(test_path)
    clf = evaluation.train_classifier(train_corpus.vectors, train_corpus.labels,
                                      l2_weight=l2_weight, steps=steps, lr=lr,
                                      seed=seed)
    acc = evaluation.per_category_accuracy(clf, test_corpus)
    evaluation.write_accuracy_csv(outfile, acc)
    write_manifest(str(outfile) + ".manifest.json", "eval classify",
                   {"l2": l2_weight, "steps": steps, "lr": lr},
                   [train_path, test_path], [outfile], seed=seed)
    click.echo(f"accuracy table written to {outfile}")


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@handle_errors
def annotate(bundle_path, port, host):
    """Start the annotation service with a session preloaded for the bundle."""
    import uvicorn

    from .service import create_app

    app = create_app(preload_bundle=bundle_path)
    click.echo(f"session 0 ready for bundle {bundle_path}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
