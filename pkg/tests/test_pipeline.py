import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from hmh import pipeline
from hmh.adjust import ILLUMINATION, AdjustmentSpec, inpaint_mask
from hmh.imgcore import read_alpha, read_rgb, resize_bilinear, to_uint8, write_gray, write_rgb
from hmh.matting import UNKNOWN, composite
from hmh.metrics import MattingScore
from hmh.pipeline import CorpusRecord, TripletRecord
from oracles import conn_loop, grad_loop, mse_loop, sad_loop

SIZE = 48


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture
def prepared(small_corpus, tmp_path):
    out = tmp_path / "prep"
    run = pipeline.prepare(small_corpus, out, size=SIZE, mask_dilation=2)
    assert run.ok
    return out


def test_prepare_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    run = pipeline.prepare(tmp_path / "empty", tmp_path / "out")
    assert run.ok and run.records == []
    assert (tmp_path / "out" / "corpus.jsonl").read_text() == ""


def test_prepare_one_pair(tmp_path):
    from conftest import make_corpus
    corpus = make_corpus(tmp_path / "c", 1)
    run = pipeline.prepare(corpus, tmp_path / "out", size=32)
    (rec,) = run.records
    for rel in (rec.image, rec.alpha, rec.foreground, rec.background):
        path = tmp_path / "out" / rel
        assert path.is_file()
        with Image.open(path) as im:
            assert im.size == (32, 32)
    assert (rec.width, rec.height) == (32, 32)


def test_prepare_outputs_are_consistent(prepared):
    for rec in pipeline.read_manifest(prepared / "corpus.jsonl"):
        img = read_rgb(prepared / rec.image)
        alpha = read_alpha(prepared / rec.alpha)
        fg = read_rgb(prepared / rec.foreground)
        bg = read_rgb(prepared / rec.background)
        assert np.array_equal(to_uint8(alpha[..., None] * img), to_uint8(fg))
        # pixels further than the dilation from any alpha > 0 keep their value
        far = ~inpaint_mask(alpha, 2)
        assert np.array_equal(bg[far], img[far])


def test_prepare_reports_orphans_and_corrupt(tmp_path):
    from conftest import make_corpus
    corpus = make_corpus(tmp_path / "c", 3, orphans=True)
    (corpus / "images" / "p001.png").write_bytes(b"not a png")
    run = pipeline.prepare(corpus, tmp_path / "out", size=SIZE, mask_dilation=1)
    assert len(run.warnings) == 2
    assert list(run.failures) == ["p001"]
    assert [r.image_id for r in run.records] == ["p000", "p002"]


def test_prepare_is_deterministic(small_corpus, tmp_path):
    pipeline.prepare(small_corpus, tmp_path / "a", size=SIZE)
    pipeline.prepare(small_corpus, tmp_path / "b", size=SIZE, jobs=2)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_manifest_round_trip():
    recs = [
        CorpusRecord("x", "I/x.png", "A/x.png", "F/x.png", "B/x.png", 256, 256),
        CorpusRecord("y", "I/y.png", "A/y.png", "F/y.png", "B/y.png", 256, 256, split="test"),
        TripletRecord("x", "a", "i", "d", "t", "b", "a", AdjustmentSpec("color_transfer", 1, target_id="y"),
                      target_image="../I/y.png", split="train"),
        TripletRecord("é", "a", "i", "d", "t", "b", "a", AdjustmentSpec(ILLUMINATION, 2**63 - 1, factor=0.4123456789)),
    ]
    text = pipeline.serialize_manifest(recs)
    assert pipeline.parse_manifest(text) == recs
    assert pipeline.serialize_manifest(pipeline.parse_manifest(text)) == text
    assert all(json.loads(line) for line in text.splitlines())


def test_triplets_identity_override(prepared, tmp_path):
    run = pipeline.build_triplets(prepared / "corpus.jsonl", tmp_path / "trip", seed=1,
                                  band_radius=3, adjust_override="illumination:1.0")
    assert run.ok and len(run.records) == 6
    for rec in run.records:
        base = tmp_path / "trip"
        img, alpha, bg = read_rgb(base / rec.image), read_alpha(base / rec.alpha), read_rgb(base / rec.background)
        dis = np.asarray(Image.open(base / rec.disharmonious))
        assert np.array_equal(dis, to_uint8(composite(img, alpha, bg)))
        tri = np.asarray(Image.open(base / rec.trimap))
        assert set(np.unique(tri)) <= {0, 128, 255}
        assert rec.adjustment == AdjustmentSpec(ILLUMINATION, 1, factor=1.0)


def test_triplets_opaque_alpha_gives_image(tmp_path, rng):
    base = tmp_path / "prep"
    img = to_uint8(rng.random((8, 8, 3))) / 255
    write_rgb(base / "I" / "o.png", img)
    write_gray(base / "A" / "o.png", np.ones((8, 8)))
    write_rgb(base / "F" / "o.png", img)
    write_rgb(base / "B" / "o.png", rng.random((8, 8, 3)))
    write_rgb(base / "I" / "z.png", rng.random((8, 8, 3)))
    recs = [CorpusRecord("o", "I/o.png", "A/o.png", "F/o.png", "B/o.png", 8, 8),
            CorpusRecord("z", "I/z.png", "A/o.png", "F/o.png", "B/o.png", 8, 8)]
    pipeline.write_manifest(base / "corpus.jsonl", recs)
    for seed in range(6):
        run = pipeline.build_triplets(base / "corpus.jsonl", tmp_path / f"t{seed}", seed=seed)
        rec = next(r for r in run.records if r.image_id == "o")
        assert np.array_equal(read_rgb(tmp_path / f"t{seed}" / rec.disharmonious), img)


def test_triplets_regenerate(prepared, tmp_path):
    run = pipeline.build_triplets(prepared / "corpus.jsonl", tmp_path / "trip", seed=9)
    assert run.ok
    kinds = {r.adjustment.kind for r in run.records}
    assert len(kinds) >= 2
    for rec in pipeline.read_manifest(tmp_path / "trip" / "triplets.jsonl"):
        stored = np.asarray(Image.open(tmp_path / "trip" / rec.disharmonious))
        assert np.array_equal(pipeline.regenerate_disharmonious(rec, tmp_path / "trip"), stored)


def test_triplets_target_pool_respects_split(prepared, tmp_path):
    pipeline.split(prepared / "corpus.jsonl", 0.5, seed=4)
    train = {r.image_id for r in pipeline.read_manifest(prepared / "corpus.jsonl") if r.split == "train"}
    for seed in range(5):
        run = pipeline.build_triplets(prepared / "corpus.jsonl", tmp_path / f"t{seed}", seed=seed)
        for r in run.records:
            assert r.split is not None
            if r.adjustment.target_id is not None:
                assert r.adjustment.target_id in train and r.adjustment.target_id != r.image_id


def test_triplets_predicted_alpha(prepared, tmp_path):
    pred_dir = tmp_path / "pred"
    for rec in pipeline.read_manifest(prepared / "corpus.jsonl"):
        write_gray(pred_dir / f"{rec.image_id}.png", np.full((20, 20), 0.5))
    run = pipeline.build_triplets(prepared / "corpus.jsonl", tmp_path / "trip", seed=2,
                                  alpha_source=f"predicted:{pred_dir}", adjust_override="color_enhance:2.0")
    assert run.ok
    for rec in run.records:
        assert rec.composite_alpha != rec.alpha
        assert np.all(read_alpha(tmp_path / "trip" / rec.composite_alpha) == 128 / 255)
        stored = np.asarray(Image.open(tmp_path / "trip" / rec.disharmonious))
        assert np.array_equal(pipeline.regenerate_disharmonious(rec, tmp_path / "trip"), stored)


def test_triplets_missing_file_counted(prepared, tmp_path):
    (prepared / "B" / "p002.png").unlink()
    run = pipeline.build_triplets(prepared / "corpus.jsonl", tmp_path / "trip", seed=0,
                                  adjust_override="illumination:0.5")
    assert list(run.failures) == ["p002"]
    assert len(run.records) == 5


def test_parse_override():
    assert pipeline.parse_override("illumination:1.5", 3) == AdjustmentSpec(ILLUMINATION, 3, factor=1.5)
    assert pipeline.parse_override("color-transfer:p001", 0).target_id == "p001"
    for bad in ("illumination", "illumination:", "illumination:-1", "sepia:1"):
        with pytest.raises(ValueError):
            pipeline.parse_override(bad, 0)


def test_assign_split_counts():
    labels = pipeline.assign_split([f"i{k}" for k in range(10)], 0.9, seed=0)
    assert sum(v == "train" for v in labels.values()) == 9
    assert labels == pipeline.assign_split([f"i{k}" for k in reversed(range(10))], 0.9, seed=0)
    assert labels != pipeline.assign_split([f"i{k}" for k in range(10)], 0.9, seed=1)
    big = pipeline.assign_split(range(34426), 0.9, seed=0)
    n_train = sum(v == "train" for v in big.values())
    assert (n_train, len(big) - n_train) == (30984, 3442)
    with pytest.raises(ValueError):
        pipeline.assign_split(["a"], 1.0, 0)


def test_split_to_other_file_keeps_paths(prepared, tmp_path):
    out = tmp_path / "elsewhere" / "labelled.jsonl"
    recs = pipeline.split(prepared / "corpus.jsonl", 0.5, 1, out_path=out)
    assert all(r.split in ("train", "test") for r in recs)
    for rec in pipeline.read_manifest(out):
        assert (out.parent / rec.image).is_file()


def test_composite_new_background(tmp_path, rng):
    bgs = tmp_path / "bgs"
    write_rgb(bgs / "wide.png", rng.random((30, 50, 3)))
    img = rng.random((12, 12, 3))
    out = pipeline.composite_new_background(img, np.ones((12, 12)), bgs, seed=5)
    assert np.array_equal(out, img)

    alpha = np.zeros((12, 12))
    out = pipeline.composite_new_background(img, alpha, bgs, seed=5)
    bg = read_rgb(bgs / "wide.png")[:, 10:40]
    assert np.array_equal(out, resize_bilinear(bg, 12, 12))

    write_rgb(bgs / "other.png", rng.random((20, 20, 3)))
    (bgs / "broken.png").write_bytes(b"junk")
    a = [pipeline.composite_new_background(img, alpha, bgs, seed=s, image_id="q") for s in range(12)]
    b = [pipeline.composite_new_background(img, alpha, bgs, seed=s, image_id="q") for s in range(12)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert len({x.tobytes() for x in a}) == 2

    (tmp_path / "none").mkdir()
    with pytest.raises(FileNotFoundError):
        pipeline.composite_new_background(img, alpha, tmp_path / "none")


def _write_eval_fixture(root, rng, n=3):
    for i in range(n):
        gt = rng.random((8, 8))
        gt[gt < 0.3] = 0
        gt[gt > 0.8] = 1
        pred = np.clip(gt + rng.normal(0, 0.15, (8, 8)), 0, 1)
        tri = np.full((8, 8), UNKNOWN, np.uint8)
        tri[0] = 0
        tri[-1] = 255
        write_gray(root / "pred" / f"m{i}.png", pred)
        write_gray(root / "gt" / f"m{i}.png", gt)
        write_gray(root / "tri" / f"m{i}.png", tri)


def test_eval_matting_fixture_table(tmp_path, rng):
    _write_eval_fixture(tmp_path, rng)
    ev = pipeline.eval_matting(tmp_path / "pred", tmp_path / "gt", tmp_path / "tri")
    assert ev.ok and list(ev.scores) == ["m0", "m1", "m2"]
    for image_id, score in ev.scores.items():
        p = (np.asarray(Image.open(tmp_path / "pred" / f"{image_id}.png")) / 255).tolist()
        g = (np.asarray(Image.open(tmp_path / "gt" / f"{image_id}.png")) / 255).tolist()
        t = np.asarray(Image.open(tmp_path / "tri" / f"{image_id}.png")).tolist()
        assert abs(score.mse - mse_loop(p, g, t)) <= 1e-6
        assert abs(score.sad - sad_loop(p, g, t)) <= 1e-6
        assert abs(score.grad - grad_loop(p, g, t)) <= 1e-6
        assert abs(score.conn - conn_loop(p, g, t)) <= 1e-6
    assert ev.means.sad == pytest.approx(np.mean([s.sad for s in ev.scores.values()]))


def test_eval_matting_self_and_single(tmp_path, rng):
    _write_eval_fixture(tmp_path, rng, n=1)
    ev = pipeline.eval_matting(tmp_path / "gt", tmp_path / "gt", tmp_path / "tri")
    assert ev.means == MattingScore(0.0, 0.0, 0.0, 0.0, 48)
    ev = pipeline.eval_matting(tmp_path / "pred", tmp_path / "gt", tmp_path / "tri")
    assert ev.means == ev.scores["m0"]


def test_eval_matting_reports_missing(tmp_path, rng):
    _write_eval_fixture(tmp_path, rng, n=2)
    (tmp_path / "tri" / "m1.png").unlink()
    write_gray(tmp_path / "pred" / "extra.png", np.zeros((8, 8)))
    ev = pipeline.eval_matting(tmp_path / "pred", tmp_path / "gt", tmp_path / "tri")
    assert set(ev.failures) == {"m1", "extra"}
    assert "trimap" in ev.failures["m1"]
    assert list(ev.scores) == ["m0"]


def test_eval_mos_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("image_id,rater_id,method,score\na,r1,ours,3\na,r2,ours,4\nb,r1,ours,5\nb,r1,dih,2\n")
    out = pipeline.eval_mos(path)
    assert out["ours"].mean == 4.0
    assert out["ours"].stddev == pytest.approx(np.sqrt(2 / 3))
    path.write_text("image_id,rater_id,method,score\na,r1,ours,7\n")
    with pytest.raises(ValueError):
        pipeline.eval_mos(path)
    path.write_text("id,score\n")
    with pytest.raises(ValueError):
        pipeline.eval_mos(path)
