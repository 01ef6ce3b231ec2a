import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siamface.data import (
    GENUINE,
    IMPOSTOR,
    FaceImage,
    RawImage,
    bilinear_resize,
    encode_pgm,
    load_corpus,
    load_pgm,
    parse_pgm,
    preprocess,
    read_manifest,
    sample_pairs,
    split,
    write_manifest,
)
from siamface.errors import FormatError, InvalidArgument


def test_parse_small_pgm():
    raw = parse_pgm(b"P5 2 2 255\n" + bytes([0, 128, 255, 64]))
    assert (raw.width, raw.height) == (2, 2)
    assert np.allclose(preprocess(raw).pixels[[0, 0, -1, -1], [0, -1, 0, -1]], [0, 128 / 255, 1.0, 64 / 255])
    face = bilinear_resize(raw.pixels.astype(np.float64) / 255, 2, 2)
    assert np.allclose(face.ravel(), [0, 0.50196, 1.0, 0.25098], atol=1e-5)


def test_parse_skips_comments():
    raw = parse_pgm(b"P5\n# made by hand\n3 1\n# another\n255\n" + bytes([1, 2, 3]))
    assert raw.pixels.tolist() == [[1, 2, 3]]


@pytest.mark.parametrize(
    "data",
    [
        b"P6 2 2 255\n" + bytes(12),
        b"P5 2 2 255\n" + bytes(3),
        b"P5 2 2 65535\n" + bytes(8),
        b"P5 2\n",
    ],
    ids=["magic", "truncated", "maxval", "header"],
)
def test_bad_pgm_is_format_error(data):
    with pytest.raises(FormatError):
        parse_pgm(data)


def test_load_pgm_error_names_path(tmp_path):
    path = tmp_path / "broken.pgm"
    path.write_bytes(b"P2 1 1 255\n0")
    with pytest.raises(FormatError, match="broken.pgm"):
        load_pgm(path)


def test_orl_geometry(synthetic_root):
    raw = load_pgm(synthetic_root / "s1" / "1.pgm")
    assert (raw.width, raw.height) == (92, 112)
    assert preprocess(raw).pixels.shape == (100, 100)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 20), w=st.integers(1, 20), seed=st.integers(0, 2**32 - 1))
def test_encode_parse_round_trip(h, w, seed):
    pixels = np.random.default_rng(seed).integers(0, 256, size=(h, w), dtype=np.uint8)
    assert np.array_equal(parse_pgm(encode_pgm(pixels)).pixels, pixels)


def test_preprocess_constant_white():
    raw = RawImage(92, 112, np.full((112, 92), 255, dtype=np.uint8))
    face = preprocess(raw)
    assert face.pixels.shape == (100, 100) and np.all(face.pixels == 1.0)


def test_preprocess_identity_at_target_size():
    pixels = np.random.default_rng(0).integers(0, 256, size=(100, 100), dtype=np.uint8)
    face = preprocess(RawImage(100, 100, pixels))
    assert np.allclose(face.pixels, pixels / 255.0)


def test_bilinear_upsample_keeps_corners():
    checker = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    face = preprocess(RawImage(2, 2, checker))
    corners = face.pixels[[0, 0, -1, -1], [0, -1, 0, -1]]
    assert np.allclose(corners, [0, 1, 1, 0])
    assert np.all((face.pixels >= 0) & (face.pixels <= 1))


def test_bilinear_midpoint_oracle():
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = bilinear_resize(img, 3, 3)
    assert np.allclose(out, [[0, 0.5, 1], [1, 1.5, 2], [2, 2.5, 3]])


def test_load_corpus_order_and_ids(synthetic_root):
    images = load_corpus(synthetic_root)
    assert len(images) == 400
    keys = [(img.subject_id, img.shot_id) for img in images]
    assert keys == sorted(keys)
    assert keys[0] == (1, 1) and keys[-1] == (40, 10)


def test_load_corpus_missing_dir(tmp_path):
    with pytest.raises(FormatError):
        load_corpus(tmp_path / "nope")


def _fake_corpus(n_subjects=40, shots=10):
    blank = np.zeros((100, 100), dtype=np.float32)
    return [FaceImage(blank, f"s{s}/{k}.pgm", s, k) for s in range(1, n_subjects + 1) for k in range(1, shots + 1)]


def test_split_sizes_and_coverage():
    images = _fake_corpus()
    sp = split(images, seed=1)
    assert (len(sp.train), len(sp.test)) == (360, 40)
    ids = {id(i) for i in sp.train} | {id(i) for i in sp.test}
    assert len(ids) == 400 and not ({id(i) for i in sp.train} & {id(i) for i in sp.test})


def test_split_deterministic_and_seed_sensitive():
    images = _fake_corpus()
    a, b, c = split(images, 1), split(images, 1), split(images, 2)
    assert [i.source_path for i in a.test] == [i.source_path for i in b.test]
    assert {i.source_path for i in a.test} != {i.source_path for i in c.test}


def test_split_wrong_size_reports_count():
    with pytest.raises(InvalidArgument, match="399"):
        split(_fake_corpus()[:399], 1)


def test_manifest_round_trip(tmp_path):
    sp = split(_fake_corpus(), seed=7)
    path = tmp_path / "split.tsv"
    write_manifest(sp, path)
    seed, rows = read_manifest(path)
    assert seed == 7
    assert [p for p, role in rows if role == "test"] == [i.source_path for i in sp.test]
    assert sum(role == "train" for _, role in rows) == 360


def test_pairs_all_genuine_and_all_impostor():
    images = _fake_corpus(5, 3)
    assert all(p.a.subject_id == p.b.subject_id and p.label == GENUINE for p in sample_pairs(images, 10, 1.0, 0))
    assert all(p.a.subject_id != p.b.subject_id and p.label == IMPOSTOR for p in sample_pairs(images, 10, 0.0, 0))


def test_pairs_never_pair_an_image_with_itself():
    pairs = sample_pairs(_fake_corpus(3, 2), 200, 1.0, 1)
    assert all(p.a is not p.b for p in pairs)


def test_pairs_genuine_share_concentrates():
    pairs = sample_pairs(_fake_corpus(), 10000, 0.5, 2)
    share = np.mean([p.label == GENUINE for p in pairs])
    assert 0.45 <= share <= 0.55


def test_pairs_impossible_requests():
    singles = _fake_corpus(4, 1)
    with pytest.raises(InvalidArgument):
        sample_pairs(singles, 5, 0.5, 0)
    with pytest.raises(InvalidArgument):
        sample_pairs(_fake_corpus(1, 4), 5, 0.5, 0)
    assert len(sample_pairs(singles, 5, 0.0, 0)) == 5


def test_pairs_seeded():
    images = _fake_corpus(6, 4)
    a = [(p.a.source_path, p.b.source_path) for p in sample_pairs(images, 30, 0.5, 9)]
    b = [(p.a.source_path, p.b.source_path) for p in sample_pairs(images, 30, 0.5, 9)]
    assert a == b
