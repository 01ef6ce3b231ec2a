import base64
import json
import math
import threading
import time

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

from live_server import serve
from siamface.data import encode_pgm, load_pgm, preprocess
from siamface.errors import FormatError, InvalidArgument, Overloaded
from siamface.gallery import Gallery
from siamface.service import (
    RecognitionService,
    ServiceConfig,
    WorkQueue,
    create_app,
    load_config,
    motion_gate,
    parse_config,
)
from siamface.service.client import CaptureConfig, ServerUnavailable, gated_bursts, post_burst
from siamface.service.config import CONFIG_ENV
from siamface.siamese import SiameseNetwork, embed_batch


@pytest.fixture(scope="module")
def net():
    return SiameseNetwork.build(0).eval()


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def face_bytes(root, subject, shot):
    return (root / f"s{subject}" / f"{shot}.pgm").read_bytes()


# work queue


def test_queue_runs_in_submission_order():
    q = WorkQueue(capacity=100, workers=1)
    order = []
    futs = [q.submit(order.append, i) for i in range(50)]
    for f in futs:
        f.result(timeout=5)
    assert order == list(range(50))
    assert [f.seq for f in futs] == list(range(1, 51))
    q.close()


def test_queue_refuses_past_capacity_and_accounts():
    q = WorkQueue(capacity=2, workers=1)
    gate = threading.Event()
    a = q.submit(gate.wait)
    b = q.submit(gate.wait)
    with pytest.raises(Overloaded):
        q.submit(gate.wait)
    assert q.depth == 2
    gate.set()
    a.result(timeout=5), b.result(timeout=5)
    bad = q.submit(lambda: 1 / 0)
    with pytest.raises(ZeroDivisionError):
        bad.result(timeout=5)
    time.sleep(0.05)
    s = q.stats
    assert (s.received, s.completed, s.failed, s.overloaded) == (4, 2, 1, 1)
    assert s.received == s.completed + s.failed + s.overloaded
    assert q.depth == 0
    q.close()


def test_queue_rejects_bad_sizes():
    with pytest.raises(InvalidArgument):
        WorkQueue(capacity=0)


# motion gate


def test_motion_gate_examples():
    black = np.zeros((10, 10), dtype=np.uint8)
    assert not motion_gate(black, black)
    assert motion_gate(black, np.full((10, 10), 255, dtype=np.uint8))
    with pytest.raises(InvalidArgument):
        motion_gate(black, np.zeros((10, 11), dtype=np.uint8))


def test_motion_gate_ignores_noise_below_half_tau():
    rng = np.random.default_rng(0)
    tau = 8 / 255
    base = rng.random((64, 64)) * 0.5 + 0.25
    for _ in range(100):
        noisy = base + rng.uniform(-tau / 2, tau / 2, size=base.shape)
        assert not motion_gate(base, noisy, tau)


def _frames(arrays):
    return iter((f"f{i}", encode_pgm(a)) for i, a in enumerate(arrays))


def test_identical_frames_send_nothing():
    still = np.full((20, 20), 90, dtype=np.uint8)
    assert list(gated_bursts(_frames([still] * 30), CaptureConfig())) == []


def test_one_scene_change_sends_one_burst():
    a = np.full((20, 20), 20, dtype=np.uint8)
    b = np.full((20, 20), 200, dtype=np.uint8)
    bursts = list(gated_bursts(_frames([a] * 5 + [b] * 25), CaptureConfig(n_frames=3)))
    assert len(bursts) == 1 and len(bursts[0]) == 3
    assert bursts[0][0] == encode_pgm(b)


def test_post_burst_backs_off_then_gives_up():
    calls, sleeps = [], []

    def handler(request):
        calls.append(request)
        return httpx.Response(503, json={"error": "overloaded"})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    cfg = CaptureConfig(retries=3, backoff_s=0.5)
    with pytest.raises(ServerUnavailable):
        post_burst(client, "http://x", [b"P5 1 1 255\n\x00"], cfg, sleep=sleeps.append)
    assert len(calls) == 4 and sleeps == [0.5, 1.0, 2.0]


def test_post_burst_retries_connection_errors():
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) < 3:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json={"request_id": "r", "matches": []})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    out = post_burst(client, "http://x", [b"x"], CaptureConfig(), sleep=lambda s: None)
    assert out["matches"] == [] and len(attempts) == 3


# configuration


def test_parse_config_types_and_comments():
    cfg = parse_config("top_n = 5\nyz1 = 0.7  # stricter\nactivity_log = /tmp/log.jsonl\n")
    assert (cfg.top_n, cfg.yz1, cfg.activity_log) == (5, 0.7, "/tmp/log.jsonl")


@pytest.mark.parametrize("text", ["colour = blue", "top_n = three", "top_n = 0", "[broken"])
def test_parse_config_errors(text):
    with pytest.raises(FormatError):
        parse_config(text)


def test_load_config_env_override(tmp_path, monkeypatch):
    path = tmp_path / "svc.conf"
    path.write_text("port = 9123\n")
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert load_config().port == 9123
    monkeypatch.delenv(CONFIG_ENV)
    assert load_config().port == 8000


# HTTP surface


@pytest.fixture
def service(net, tmp_path):
    cfg = ServiceConfig(gallery_path=str(tmp_path / "g.sfg"), activity_log=str(tmp_path / "activity.jsonl"))
    svc = RecognitionService(net, Gallery.open(cfg.gallery_path), cfg)
    yield svc
    svc.close()


@pytest.fixture
def client(service):
    with TestClient(create_app(service)) as c:
        yield c


def test_register_twice_keeps_two_records(client, service, synthetic_root):
    for shot in (1, 2):
        r = client.post("/register", json={"user_id": "9", "image_b64": b64(face_bytes(synthetic_root, 3, shot))})
        assert r.status_code == 200 and r.json()["status"] == "registered"
        assert len(r.json()["embedding"]) == 5
    assert [rec.user_id for rec in service.gallery.records()] == ["9", "9"]
    assert len(Gallery.load(service.config.gallery_path)) == 2


@pytest.mark.parametrize(
    "body",
    [{"user_id": "", "image_b64": "AAAA"}, {"image_b64": "AAAA"}, {"user_id": "1", "image_b64": "***"}],
    ids=["empty-id", "missing-id", "bad-base64"],
)
def test_register_rejects_bad_input(client, service, body):
    r = client.post("/register", json=body)
    assert r.status_code == 400 and r.json()["retryable"] is False
    assert len(service.gallery) == 0


def test_register_undecodable_image(client):
    r = client.post("/register", json={"user_id": "1", "image_b64": b64(b"not an image")})
    assert r.status_code == 400 and r.json()["error"] == "format"


def test_recognize_on_empty_gallery(client):
    r = client.post("/recognize", json={"request_id": "r1", "frames_b64": [b64(encode_pgm(np.zeros((8, 8), np.uint8)))]})
    assert r.status_code == 200 and r.json()["matches"] == []


def test_recognize_frame_limits(client):
    frame = b64(encode_pgm(np.zeros((8, 8), np.uint8)))
    assert client.post("/recognize", json={"request_id": "r", "frames_b64": []}).status_code == 400
    assert client.post("/recognize", json={"request_id": "r", "frames_b64": [frame] * 4}).status_code == 400


def _enroll(service, root, subjects, shots):
    for s in subjects:
        for k in shots:
            service.register(str(s), face_bytes(root, s, k))


def oracle_top(net, gallery, frames, n):
    faces = [preprocess(load_pgm(p)) for p in frames]
    best = {}
    for vec in embed_batch(net, faces):
        for rec_i, rec in enumerate(gallery.records()):
            d = math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(rec.embedding, vec)))
            best[rec_i] = min(best.get(rec_i, math.inf), d)
    ranked = sorted((d, i) for i, d in best.items())[:n]
    return [(gallery.records()[i].user_id, d) for d, i in ranked]


def test_recognize_matches_brute_force(client, service, net, synthetic_root):
    _enroll(service, synthetic_root, range(1, 6), range(1, 4))
    paths = [synthetic_root / "s2" / f"{k}.pgm" for k in (7, 8, 9)]
    body = {"request_id": "q", "frames_b64": [b64(p.read_bytes()) for p in paths]}
    got = client.post("/recognize", json=body).json()
    want = oracle_top(net, service.gallery, paths, 3)
    assert [m["user_id"] for m in got["matches"]] == [u for u, _ in want]
    for m, (_, d) in zip(got["matches"], want):
        assert m["distance"] == pytest.approx(d, abs=1e-9)
        assert m["score"] == pytest.approx(1 / (1 + d))
    again = client.post("/recognize", json=body).json()
    assert again["matches"] == got["matches"]


def test_recognize_reports_bad_frames_but_uses_good_ones(client, service, synthetic_root):
    _enroll(service, synthetic_root, [1, 2], [1])
    good = b64(face_bytes(synthetic_root, 1, 5))
    r = client.post("/recognize", json={"request_id": "mixed", "frames_b64": ["!!", b64(b"junk"), good]}).json()
    assert [e["frame"] for e in r["frame_errors"]] == [0, 1]
    assert len(r["matches"]) == 2


def test_activity_log_lines(client, service, synthetic_root):
    _enroll(service, synthetic_root, [1], [1])
    frame = b64(face_bytes(synthetic_root, 1, 2))
    client.post("/recognize", json={"request_id": "a1", "frames_b64": [frame]})
    client.post("/recognize", json={"request_id": "a2", "frames_b64": [frame]})
    lines = [json.loads(line) for line in open(service.config.activity_log)]
    assert [e["request_id"] for e in lines] == ["a1", "a2"]
    assert lines[0]["matches"][0]["user_id"] == "1"


def test_post_uid_drives_board(client):
    r = client.post("/postUid", content="uid1=42&value1=0.9&uid2=7&value2=0.8",
                    headers={"content-type": "application/x-www-form-urlencoded"})
    assert r.status_code == 200
    assert r.json()["events"][0]["uid"] == "42"
    board = client.get("/getUinfo").json()
    assert board[0]["uid"] == "42" and board[0]["stat"] == "OnScreen"
    assert all(s["uid"] == "" for s in board[1:])


@pytest.mark.parametrize("body", ["", "value1=0.9", "uid1=4&value1=high"])
def test_post_uid_rejects_bad_forms(client, body):
    assert client.post("/postUid", content=body).status_code == 400


def test_low_score_does_not_reach_board(client):
    client.post("/postUid", content="uid1=42&value1=0.2")
    assert all(s["stat"] == "Empty" for s in client.get("/getUinfo").json())


def test_health_and_stats(client):
    assert client.get("/healthz").json() == {"status": "ok", "queue_depth": 0}
    stats = client.get("/stats").json()
    assert stats["received"] == 0 and stats["gallery_size"] == 0


def test_overload_answers_503_with_retry_after(net):
    svc = RecognitionService(net, Gallery(), ServiceConfig(queue_capacity=1))
    gate = threading.Event()
    blocker = svc.queue.submit(gate.wait)
    try:
        with TestClient(create_app(svc, manage_lifecycle=False)) as c:
            r = c.post("/recognize", json={"request_id": "x", "frames_b64": [b64(b"P5 1 1 255\n\x00")]})
            assert r.status_code == 503
            assert r.headers["retry-after"] == "1"
            assert r.json()["retryable"] is True
    finally:
        gate.set()
        blocker.result(timeout=5)
        svc.close()


def test_events_stream_pushes_show(net):
    svc = RecognitionService(net, Gallery())
    with serve(svc) as url, httpx.Client() as http:
        with http.stream("GET", url + "/events?limit=1", timeout=10) as stream:
            lines = stream.iter_lines()
            assert next(lines) == ": connected"
            http.post(url + "/postUid", content="uid1=5&value1=0.95")
            data = [line for line in lines if line.startswith("data: ")]
    event = json.loads(data[0].removeprefix("data: "))
    assert (event["kind"], event["slot"], event["uid"]) == ("show", 0, "5")
