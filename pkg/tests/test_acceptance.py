"""Acceptance gate: one test per release criterion, each printing a single
PASS/FAIL line with its pinned tolerance. Tolerances live here and nowhere
else; do not loosen them to make a failure go away."""

import hashlib
import math
import time
from contextlib import contextmanager
from pathlib import Path

import cv2
import numpy as np
import pytest
from click.testing import CliRunner

from conftest import angle_between, scalar_pinhole, scalar_vanishing_point

from eco.adaptation import (
    AdaptationModel,
    DenseNetwork,
    TrainingConfig,
    discriminator_grads,
    discriminator_loss,
    generator_grads,
    generator_loss,
    train,
)
from eco.annotation import AnnotationSession
from eco.cli import main as cli_main
from eco.descriptor import compose
from eco.evaluation import LabeledCorpus, nn_retrieve, recall_curve, train_classifier
from eco.geometry import (
    Bundle,
    CameraIntrinsics,
    Frame,
    axis_from_vanishing_point,
    scene_axes_from_vps,
    triangulate,
)
from eco.rectify import (
    CuboidFace,
    build_face_warp,
    frontalization_homography,
    warp_image,
    warped_face_polygon,
)
from eco.synthetic import (
    FACES,
    face_normal,
    face_quad,
    generate,
    render,
    render_view,
)


@contextmanager
def criterion(capsys, num, name):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        with capsys.disabled():
            print(f"[criterion {num:2d}] {name}: FAIL")
        raise
    with capsys.disabled():
        print(f"[criterion {num:2d}] {name}: PASS {info['detail']}".rstrip())


def _bundle_of(scene):
    frames = [Frame(id=scene.frame_id(i), image_path=f"{scene.frame_id(i)}.png",
                    pose=pose) for i, pose in enumerate(scene.poses)]
    return Bundle(intrinsics=scene.intrinsics, frames=frames)


def _front_faces(scene, frame_idx):
    """Vertical faces fully in front of the camera and facing it."""
    pose = scene.poses[frame_idx]
    out = []
    for box in scene.boxes:
        for face in ("+x", "-x", "+y", "-y"):
            quad = face_quad(box, face)
            if face_normal(box, face) @ (quad.mean(axis=0) - pose.C) >= 0:
                continue
            depths = [(pose.R @ (X - pose.C))[2] for X in quad]
            if min(depths) <= 0.3:
                continue
            out.append(CuboidFace.from_corners(quad))
    return out


def test_01_frontalization_matches_direct_render(capsys):
    # warped face vs direct fronto-parallel render: mean abs pixel error
    # < 5 (8-bit) over valid pixels, 20 random tilts up to 60 degrees;
    # < 1 s to warp a 1-megapixel frame
    with criterion(capsys, 1, "frontalization vs direct render") as info:
        errors = []
        for seed in range(20):
            scene = generate("single-face", seed=seed)
            intr, pose = scene.intrinsics, scene.poses[0]
            img = render(scene, 0)
            face = CuboidFace.from_corners(face_quad(scene.boxes[0], "-y"))
            spec = build_face_warp(intr, pose, face, scene.gravity)
            warped = warp_image(img, spec.W, spec.canvas_size)
            # the same plane rendered directly by the equivalent camera
            R_O = np.linalg.inv(intr.K) @ spec.H_O @ intr.K
            K2 = spec.T @ spec.H_s @ intr.K
            direct = render_view(scene.boxes, K2, R_O @ pose.R, pose.C,
                                 spec.canvas_size[0], spec.canvas_size[1])
            mask = (warped.sum(axis=-1) > 0) & (direct.sum(axis=-1) > 0)
            mask = cv2.erode(mask.astype(np.uint8), np.ones((3, 3),
                                                            np.uint8)) > 0
            assert mask.sum() > 1000
            err = np.abs(warped.astype(float) - direct.astype(float))[mask].mean()
            errors.append(err)
            assert err < 5.0, f"seed {seed}: mean abs error {err:.2f}"
        big = CameraIntrinsics(fx=900.0, fy=900.0, cx=500.0, cy=500.0,
                               width=1000, height=1000)
        scene = generate("single-face", seed=0, intrinsics=big)
        img = render(scene, 0)
        face = CuboidFace.from_corners(face_quad(scene.boxes[0], "-y"))
        spec = build_face_warp(big, scene.poses[0], face, scene.gravity)
        t0 = time.perf_counter()
        warp_image(img, spec.W, spec.canvas_size)
        dt = time.perf_counter() - t0
        assert dt < 1.0, f"1-MP warp took {dt:.2f}s"
        info["detail"] = (f"(max mean err {max(errors):.2f}/255, "
                          f"1-MP warp {dt * 1e3:.0f} ms)")


def test_02_homography_identities(capsys):
    # H(K n) lands on the principal point and H(K g) is vertical at
    # infinity, both within 1e-9 relative, over 1000 random configurations
    # (face normal perpendicular to gravity)
    with criterion(capsys, 2, "homography identities x1000") as info:
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(1000):
            intr = CameraIntrinsics(
                fx=float(rng.uniform(300, 1500)), fy=float(rng.uniform(300, 1500)),
                cx=float(rng.uniform(200, 800)), cy=float(rng.uniform(150, 600)),
                width=1600, height=1200)
            g = rng.normal(size=3)
            g /= np.linalg.norm(g)
            n = np.cross(g, rng.normal(size=3))
            norm = np.linalg.norm(n)
            if norm < 1e-6:
                continue
            n /= norm
            H = frontalization_homography(intr, n, g, n)
            p = H @ (intr.K @ n)
            p /= p[2]
            expected = np.array([intr.cx, intr.cy, 1.0])
            rel1 = np.abs(p - expected).max() / np.abs(expected).max()
            q = H @ (intr.K @ g)
            rel2 = max(abs(q[2]), abs(q[0])) / np.linalg.norm(q)
            worst = max(worst, rel1, rel2)
            assert rel1 < 1e-9 and rel2 < 1e-9
        info["detail"] = f"(worst relative error {worst:.2e})"


def test_03_scale_contract_all_presets(capsys):
    # frontalized faces span fy +- 0.5 px vertically on every preset
    with criterion(capsys, 3, "vertical span = fy +- 0.5 px") as info:
        checked = 0
        for preset, frames in (("single-face", [0]), ("aisle", [0, 4, 9]),
                               ("orbit", [0, 5])):
            scene = generate(preset, seed=1, n_frames=10 if preset != "single-face" else None)
            fy = scene.intrinsics.fy
            for fi in frames:
                for face in _front_faces(scene, fi):
                    spec = build_face_warp(scene.intrinsics, scene.poses[fi],
                                           face, scene.gravity)
                    poly = warped_face_polygon(spec, scene.intrinsics,
                                               scene.poses[fi], face)
                    span = poly[:, 1].max() - poly[:, 1].min()
                    assert abs(span - fy) <= 0.5, f"{preset}: span {span}"
                    checked += 1
        assert checked >= 10
        info["detail"] = f"({checked} faces across 3 presets)"


def test_04_axis_gravity_triangulation_recovery(capsys):
    # noise-free recovery from forward-projected oracles: <= 1e-6 rad for
    # directions, <= 1e-6 units for the triangulated point
    with criterion(capsys, 4, "axis/gravity/triangulation recovery") as info:
        scene = generate("orbit", seed=2, n_frames=8)
        intr = scene.intrinsics
        worst_ang, worst_pos = 0.0, 0.0
        for pose in scene.poses:
            vp_x = scalar_vanishing_point(intr, pose.R, scene.x_dir)
            vp_y = scalar_vanishing_point(intr, pose.R, scene.y_dir)
            axis = axis_from_vanishing_point(intr, pose, vp_x)
            worst_ang = max(worst_ang, angle_between(axis, scene.x_dir))
            axes = scene_axes_from_vps(intr, pose, vp_x, vp_y)
            worst_ang = max(worst_ang, angle_between(axes.gravity, scene.gravity))
            assert axes.gravity @ scene.gravity > 0  # sign rule: image-down
        target = np.array([0.25, -0.4, 1.3])
        for i, j in ((0, 4), (1, 6), (2, 7)):
            pa, pb = scene.poses[i], scene.poses[j]
            px_a = scalar_pinhole(intr, pa.R, pa.C, target)[:2]
            px_b = scalar_pinhole(intr, pb.R, pb.C, target)[:2]
            rec = triangulate(px_a, pa, px_b, pb, intr)
            worst_pos = max(worst_pos, float(np.abs(rec - target).max()))
        assert worst_ang <= 1e-6 and worst_pos <= 1e-6
        info["detail"] = f"(max {worst_ang:.1e} rad, {worst_pos:.1e} units)"


def test_05_descriptor_laws(capsys):
    # permutation invariance, fixed point on constant inputs, and weight
    # scale invariance within 1e-12 over 1000 randomized cases
    with criterion(capsys, 5, "descriptor laws x1000") as info:
        rng = np.random.default_rng(3)
        for case in range(1000):
            n = int(rng.integers(1, 9))
            d = int(rng.integers(2, 17))
            feats = [rng.uniform(-1, 1, size=d) for _ in range(n)]
            weights = rng.uniform(0.1, 10.0, size=n)
            base = compose(feats, weights=list(weights)).values
            order = rng.permutation(n)
            perm = compose([feats[i] for i in order],
                           weights=[weights[i] for i in order]).values
            assert np.abs(perm - base).max() <= 1e-12
            scale = float(rng.uniform(0.5, 2.0))
            scaled = compose(feats, weights=list(weights * scale)).values
            assert np.abs(scaled - base).max() <= 1e-12
            const = rng.uniform(-1, 1, size=d)
            fixed = compose([const] * n, weights=list(weights)).values
            assert np.abs(fixed - const).max() <= 1e-12
        info["detail"] = "(1000 cases, tol 1e-12)"


def _acceptance_model(dim, hidden, seed):
    model = AdaptationModel(dim, hidden=hidden, seed=seed)
    rng = np.random.default_rng(seed + 500)
    for net in (model.discriminator, model.residual, model.reconstructor):
        for i in range(len(net.weights)):
            net.weights[i] = rng.normal(0.0, 0.4, size=net.weights[i].shape)
            net.biases[i] = rng.normal(0.0, 0.1, size=net.biases[i].shape)
    return model


def test_06_gradient_correctness(capsys):
    # analytic vs central finite differences, 100 random parameter probes,
    # max relative error < 1e-4 (alpha = 1)
    with criterion(capsys, 6, "analytic gradients, 100 probes") as info:
        rng = np.random.default_rng(4)
        model = _acceptance_model(4, 6, seed=0)
        tr = rng.normal(size=(5, 4))
        te = rng.normal(size=(5, 4))
        h, worst, probes = 1e-5, 0.0, 0

        def probe(params, grads, loss_fn, count):
            nonlocal worst, probes
            flat_p = [p.reshape(-1) for p in params]
            flat_g = [np.asarray(g).reshape(-1) for g in grads]
            sizes = np.array([p.size for p in flat_p])
            for _ in range(count):
                k = int(rng.integers(len(flat_p)))
                j = int(rng.integers(sizes[k]))
                orig = flat_p[k][j]
                flat_p[k][j] = orig + h
                up = loss_fn()
                flat_p[k][j] = orig - h
                dn = loss_fn()
                flat_p[k][j] = orig
                fd = (up - dn) / (2 * h)
                rel = abs(flat_g[k][j] - fd) / max(1.0, abs(fd))
                worst = max(worst, rel)
                probes += 1
                assert rel < 1e-4

        d_grads = discriminator_grads(model, tr, te)
        probe(model.discriminator.params(),
              [g for pair in d_grads for g in pair],
              lambda: discriminator_loss(model, tr, te), 50)
        r_grads, g_grads = generator_grads(model, te, alpha=1.0)
        fg = lambda: generator_loss(model, te, alpha=1.0)
        probe(model.residual.params(),
              [g for pair in r_grads for g in pair], fg, 25)
        probe(model.reconstructor.params(),
              [g for pair in g_grads for g in pair], fg, 25)
        assert probes == 100
        info["detail"] = f"(worst relative error {worst:.1e})"


def test_07_loss_hand_values(capsys):
    # chance-level discriminator on a single pair gives 2 ln 2; an adapter
    # with perfect reconstruction and D = 1/2 gives ln 2; both within 1e-9
    with criterion(capsys, 7, "loss hand values") as info:
        dim = 3
        d_net = DenseNetwork([dim, 4, 1], ["relu", "sigmoid"])  # all-zero: D = 1/2
        r_net = DenseNetwork([dim, 4, dim], ["relu", "linear"])  # R = 0
        eye = np.eye(dim)
        g_net = DenseNetwork([dim, 2 * dim, dim], ["relu", "linear"],
                             [np.hstack([eye, -eye]), np.vstack([eye, -eye])],
                             [np.zeros(2 * dim), np.zeros(dim)])  # G(x) = x
        model = AdaptationModel(dim, hidden=4, networks=(d_net, r_net, g_net))
        x = np.array([[0.7, -1.2, 0.4]])
        d_loss = discriminator_loss(model, x, x)
        assert abs(d_loss - 2 * math.log(2)) < 1e-9
        fg_loss = generator_loss(model, x, alpha=1.0)
        assert abs(fg_loss - math.log(2)) < 1e-9
        info["detail"] = (f"(L_D={d_loss:.9f}~2ln2, "
                          f"L_FG={fg_loss:.9f}~ln2)")


def _toy_domain(seed, shift=5.0, angle=0.7):
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(6, 32)) * 0.5

    def sample(n_per):
        X, y = [], []
        for c in range(6):
            X.append(means[c] + rng.normal(0.0, 0.4, size=(n_per, 32)))
            y += [c] * n_per
        return np.vstack(X), np.array(y)

    X_train, y_train = sample(60)
    X_src, y_test = sample(30)
    R = np.eye(32)
    for k in range(16):
        i, j = 2 * k, 2 * k + 1
        c, s = np.cos(angle), np.sin(angle)
        B = np.eye(32)
        B[i, i] = c
        B[i, j] = -s
        B[j, i] = s
        B[j, j] = c
        R = B @ R
    t = rng.normal(size=32)
    t = t / np.linalg.norm(t) * shift
    return X_train, y_train, X_src @ R.T + t, y_test


def _nn_accuracy(Q, qy, DB, dby):
    d2 = ((Q[:, None, :] - DB[None, :, :]) ** 2).sum(-1)
    return float((dby[d2.argmin(axis=1)] == qy).mean())


def test_08_adaptation_efficacy(capsys):
    # 6-class Gaussians in 32-d, test domain rotated + shifted: adapter
    # lifts nearest-neighbor accuracy by >= 10 points averaged over 5
    # seeds, in under 2 minutes; with no shift the residual stays small
    # (mean ||R(x)||/||x|| < 0.1)
    with criterion(capsys, 8, "adaptation efficacy (toy benchmark)") as info:
        t0 = time.perf_counter()
        gains = []
        for seed in range(5):
            X_train, y_train, X_test, y_test = _toy_domain(seed)
            base = _nn_accuracy(X_test, y_test, X_train, y_train)
            cfg = TrainingConfig(batch_size=32, hidden=256, iterations=600,
                                 seed=seed)
            model, _ = train(X_train, X_test, cfg)
            adapted = _nn_accuracy(model.adapt(X_test), y_test, X_train, y_train)
            gains.append(adapted - base)
        mean_gain = float(np.mean(gains))
        assert mean_gain >= 0.10, f"mean gain {mean_gain:.3f}"

        # identity control: same distribution on both sides
        X_train, _, _, _ = _toy_domain(100, shift=0.0, angle=0.0)
        rng = np.random.default_rng(1)
        X_same = X_train[rng.permutation(len(X_train))][:180]
        model, _ = train(X_train, X_same,
                         TrainingConfig(batch_size=32, hidden=256,
                                        iterations=600, seed=0))
        r = model.residual.forward(X_same)
        ratio = float(np.mean(np.linalg.norm(r, axis=1)
                              / np.linalg.norm(X_same, axis=1)))
        assert ratio < 0.1, f"identity residual ratio {ratio:.3f}"
        dt = time.perf_counter() - t0
        assert dt < 120.0
        info["detail"] = (f"(mean gain {mean_gain * 100:+.1f} pts, "
                          f"identity ratio {ratio:.3f}, {dt:.0f}s)")


def test_09_retrieval_matches_bruteforce(capsys):
    # full rankings identical to an independent brute-force sort on a
    # 100-item corpus; recall@k monotone nondecreasing in k
    with criterion(capsys, 9, "retrieval vs brute-force oracle") as info:
        rng = np.random.default_rng(5)
        vectors = rng.normal(size=(100, 16))
        labels = [["a", "b", "c", "d"][i % 4] for i in range(100)]
        ids = [int(i) for i in rng.permutation(1000)[:100]]
        corpus = LabeledCorpus(vectors=vectors, labels=labels, ids=ids)
        for _ in range(20):
            q = rng.normal(size=16)
            oracle = [i for _, i in sorted(
                (float(np.sqrt(((v - q) ** 2).sum())), int(i))
                for v, i in zip(vectors, ids))]
            assert nn_retrieve(q, corpus, k=100) == oracle
        queries = LabeledCorpus(vectors=rng.normal(size=(30, 16)),
                                labels=[labels[i] for i in range(30)],
                                ids=list(range(2000, 2030)))
        curves = recall_curve(queries, corpus, k_max=20)
        for vals in curves.values():
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        info["detail"] = "(20 queries, rankings identical)"


def test_10_classifier_sanity(capsys):
    # >= 99% train accuracy on separable clusters within 5000 steps; a huge
    # l2 penalty drives the weight norm below 1e-3
    with criterion(capsys, 10, "classifier sanity") as info:
        rng = np.random.default_rng(6)
        X, y = [], []
        for i, cat in enumerate(["bread", "cereal", "cheese",
                                 "dairy", "frozen-food", "meat"]):
            center = np.zeros(12)
            center[2 * i] = 5.0
            X.append(center + rng.normal(0.0, 0.3, size=(25, 12)))
            y += [cat] * 25
        X = np.vstack(X)
        clf = train_classifier(X, y, steps=500)
        acc = float(np.mean([p == t for p, t in zip(clf.predict(X), y)]))
        assert acc >= 0.99
        flat = train_classifier(X, y, l2_weight=1e5, steps=2000, lr=1e-6)
        w_norm = float(np.linalg.norm(flat.W))
        assert w_norm < 1e-3
        info["detail"] = f"(train acc {acc:.3f}, strong-l2 |W| {w_norm:.1e})"


def test_11_determinism(capsys, tmp_path):
    # identical invocations of every pipeline command produce bit-identical
    # outputs, verified by hashing every written file across two runs
    with criterion(capsys, 11, "bit-identical re-runs") as info:
        runner = CliRunner()
        digests = []
        for name in ("run-a", "run-b"):
            root = tmp_path / name
            root.mkdir()
            scene = root / "scene"
            for args in (
                ["synth", "--preset", "single-face", "--seed", "5",
                 "--out", str(scene)],
                ["warp", "--bundle", str(scene / "bundle.json"),
                 "--labels", str(scene / "labels.json"),
                 "--out", str(root / "warped")],
                ["strips", "--in", str(root / "warped"),
                 "--out", str(root / "strips")],
                ["features", "--in", str(root / "strips"),
                 "--out", str(root / "feat.ecof")],
                ["adapt-train", "--train", str(root / "feat.ecof"),
                 "--test", str(root / "feat.ecof"), "--steps", "5",
                 "--batch", "4", "--hidden", "8", "--seed", "3",
                 "--out", str(root / "adapter.ecoa")],
                ["eval", "recall", "--query", str(root / "feat.ecof"),
                 "--db", str(root / "feat.ecof"), "--kmax", "3",
                 "--out", str(root / "recall.csv")],
            ):
                result = runner.invoke(cli_main, args, catch_exceptions=False)
                assert result.exit_code == 0, result.output
            digest = {}
            for path in sorted(root.rglob("*")):
                if path.is_file():
                    digest[str(path.relative_to(root))] = hashlib.sha256(
                        path.read_bytes()).hexdigest()
            digests.append(digest)
        assert digests[0] == digests[1]
        info["detail"] = f"({len(digests[0])} files hashed per run)"


def test_12_annotation_propagation(capsys):
    # one box edit on a 200-frame orbit propagates everywhere: the box is
    # visible in all frames and projected corners match an independent
    # scalar projector within 1e-6 px
    with criterion(capsys, 12, "1 edit labels 200 frames") as info:
        scene = generate("orbit", seed=0)
        assert len(scene.poses) == 200
        intr = scene.intrinsics
        session = AnnotationSession(_bundle_of(scene))
        pose0 = scene.poses[0]
        session.set_vanishing_points(
            "frame0000",
            scalar_vanishing_point(intr, pose0.R, scene.x_dir),
            scalar_vanishing_point(intr, pose0.R, scene.y_dir))
        box = scene.boxes[0]
        pose_b = scene.poses[100]
        session.triangulate_origin(
            "frame0000", scalar_pinhole(intr, pose0.R, pose0.C, box.origin)[:2],
            "frame0100", scalar_pinhole(intr, pose_b.R, pose_b.C, box.origin)[:2])
        box_id = session.create_box(box.category, extents=list(box.extents))
        session.move_face(box_id, "+z", 0.1)  # the single edit
        projections = session.propagate(box_id)
        assert len(projections) == 200
        assert all(p["visible"] for p in projections.values())
        corners = session.boxes[box_id].corners()
        worst = 0.0
        for i, pose in enumerate(scene.poses):
            proj = projections[scene.frame_id(i)]
            for px, X in zip(proj["corners"], corners):
                u, v, depth = scalar_pinhole(intr, pose.R, pose.C, X)
                assert depth > 0 and px is not None
                worst = max(worst, abs(px[0] - u), abs(px[1] - v))
        assert worst <= 1e-6
        info["detail"] = f"(200 frames, worst corner error {worst:.1e} px)"
