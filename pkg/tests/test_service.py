"""HTTP service: session lifecycle, edit semantics, recovery caching, persistence."""

import base64
import dataclasses

import pytest
import torch
from fastapi.testclient import TestClient

from fashiontex import Config, VOCABULARY
from fashiontex.config import backbone_config_hash
from fashiontex.imaging import decode_png_base64, encode_png_base64, png_bytes
from fashiontex.recovery import RecoveryConfig
from fashiontex.service import create_app

from conftest import make_image


def fast_config(**service_overrides):
    cfg = Config()
    return dataclasses.replace(
        cfg,
        recovery=RecoveryConfig(steps=6, log_every=3),
        service=dataclasses.replace(cfg.service, **service_overrides),
    )


@pytest.fixture(scope="module")
def client(backbones, mapper):
    app = create_app(fast_config(), backbones=backbones, mapper=mapper)
    with TestClient(app) as c:
        yield c


def upload(client, seed=80):
    files = {"file": ("portrait.png", png_bytes(make_image(seed)), "image/png")}
    resp = client.post("/sessions", files=files)
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestHealthAndVocabulary:
    def test_ready_with_config_hash(self, client):
        body = client.get("/healthz").json()
        assert body["ready"] is True
        assert body["backbone_config_hash"] == backbone_config_hash(Config().backbones)

    def test_not_ready_before_startup(self, backbones):
        app = create_app(fast_config())
        client = TestClient(app)  # no context manager: startup never runs
        assert client.get("/healthz").json()["ready"] is False
        resp = client.post("/sessions", files={"file": ("x.png", b"123", "image/png")})
        assert resp.status_code == 503

    def test_vocabulary_lists_every_pair(self, client):
        body = client.get("/vocabulary").json()
        assert body["pairs"] == [list(p) for p in VOCABULARY]
        assert set(body["upper"]) == {u for u, _ in VOCABULARY}
        assert set(body["lower"]) == {l for _, l in VOCABULARY}

    def test_cross_origin_requests_allowed(self, client):
        resp = client.get("/healthz", headers={"Origin": "http://studio.example"})
        assert resp.headers["access-control-allow-origin"] == "*"


class TestSessions:
    def test_upload_returns_id_and_preview(self, client):
        body = upload(client)
        assert body["session_id"]
        preview = decode_png_base64(body["preview"])
        assert preview.shape == (64, 64, 3)

    def test_undecodable_upload_rejected(self, client):
        resp = client.post("/sessions", files={"file": ("x.png", b"junk", "image/png")})
        assert resp.status_code == 400

    def test_oversized_upload_rejected(self, backbones, mapper):
        app = create_app(
            fast_config(max_upload_bytes=64), backbones=backbones, mapper=mapper
        )
        with TestClient(app) as small:
            resp = small.post(
                "/sessions", files={"file": ("x.png", b"0" * 65, "image/png")}
            )
            assert resp.status_code == 413

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/edits", json={"text": "a, b"}).status_code == 404

    def test_summary_lists_history_without_pixels(self, client):
        sid = upload(client, seed=81)["session_id"]
        client.post(f"/sessions/{sid}/edits", json={"text": "shirt, short skirt"})
        body = client.get(f"/sessions/{sid}").json()
        assert body["session_id"] == sid
        assert len(body["history"]) == 1
        entry = body["history"][0]
        assert entry["edit_index"] == 0
        assert entry["recovered"] is False
        assert entry["condition"]["text_upper"] == "shirt"
        assert "image" not in entry and "png" not in entry


class TestEdits:
    def test_combined_prompt_and_split_fields_agree(self, client):
        sid = upload(client, seed=82)["session_id"]
        a = client.post(f"/sessions/{sid}/edits", json={"text": "shirt, short skirt"})
        b = client.post(
            f"/sessions/{sid}/edits",
            json={"text_upper": "shirt", "text_lower": "short skirt"},
        )
        assert a.status_code == b.status_code == 200
        assert a.json()["image"] == b.json()["image"]

    def test_same_request_twice_returns_identical_bytes(self, client):
        sid = upload(client, seed=83)["session_id"]
        payload = {"text": "sleeveless top, short skirt"}
        a = client.post(f"/sessions/{sid}/edits", json=payload).json()["image"]
        b = client.post(f"/sessions/{sid}/edits", json=payload).json()["image"]
        assert a == b

    def test_patch_edit_accepts_base64_png(self, client):
        sid = upload(client, seed=84)["session_id"]
        patch = encode_png_base64(torch.full((16, 16, 3), 0.25))
        resp = client.post(f"/sessions/{sid}/edits", json={"patch_lower": patch})
        assert resp.status_code == 200
        assert decode_png_base64(resp.json()["image"]).shape == (64, 64, 3)

    def test_base_entry_changes_the_starting_latent(self, client):
        sid = upload(client, seed=85)["session_id"]
        first = client.post(
            f"/sessions/{sid}/edits", json={"text": "shirt, short skirt"}
        ).json()["image"]
        from_original = client.post(
            f"/sessions/{sid}/edits", json={"text": "sweater, pants"}
        ).json()["image"]
        chained = client.post(
            f"/sessions/{sid}/edits", json={"text": "sweater, pants", "base": 0}
        ).json()["image"]
        assert chained != from_original
        assert first != chained

    @pytest.mark.parametrize(
        "payload",
        [
            {},  # no condition at all
            {"text": "missing comma"},
            {"text": "a, b", "text_upper": "c"},
            {"patch_upper": "!!!not-base64!!!"},
            {"patch_upper": base64.b64encode(b"not a png").decode()},
            {"text": "a, b", "base": 99},
            {"unknown_field": 1},
        ],
    )
    def test_malformed_edit_requests_are_422(self, client, payload):
        sid = upload(client, seed=86)["session_id"]
        resp = client.post(f"/sessions/{sid}/edits", json=payload)
        assert resp.status_code == 422, resp.text


class TestRecovery:
    def test_recover_then_cache_returns_identical_bytes(self, client):
        sid = upload(client, seed=87)["session_id"]
        client.post(f"/sessions/{sid}/edits", json={"text": "shirt, short skirt"})
        first = client.post(f"/sessions/{sid}/edits/0/recover")
        assert first.status_code == 200
        again = client.post(f"/sessions/{sid}/edits/0/recover")
        assert again.json()["image"] == first.json()["image"]
        summary = client.get(f"/sessions/{sid}").json()
        assert summary["history"][0]["recovered"] is True

    def test_recover_unknown_edit_is_404(self, client):
        sid = upload(client, seed=88)["session_id"]
        assert client.post(f"/sessions/{sid}/edits/3/recover").status_code == 404


class TestPersistence:
    def test_sessions_survive_an_app_restart(self, backbones, mapper, tmp_path):
        cfg = fast_config(persist_dir=str(tmp_path / "store"))
        with TestClient(create_app(cfg, backbones=backbones, mapper=mapper)) as client:
            sid = upload(client, seed=89)["session_id"]
            payload = {"text": "shirt, short skirt"}
            edited = client.post(f"/sessions/{sid}/edits", json=payload).json()["image"]
            recovered = client.post(f"/sessions/{sid}/edits/0/recover").json()["image"]

        with TestClient(create_app(cfg, backbones=backbones, mapper=mapper)) as client:
            summary = client.get(f"/sessions/{sid}").json()
            assert [e["edit_index"] for e in summary["history"]] == [0]
            assert summary["history"][0]["recovered"] is True
            again = client.post(f"/sessions/{sid}/edits/0/recover").json()["image"]
            assert again == recovered
            replay = client.post(f"/sessions/{sid}/edits", json=payload).json()["image"]
            assert replay == edited

    def test_store_layout_uses_one_directory_per_session(self, backbones, mapper, tmp_path):
        store = tmp_path / "store"
        cfg = fast_config(persist_dir=str(store))
        with TestClient(create_app(cfg, backbones=backbones, mapper=mapper)) as client:
            sid = upload(client, seed=90)["session_id"]
            client.post(f"/sessions/{sid}/edits", json={"text": "shirt, pants"})
        d = store / sid
        assert (d / "original.png").is_file()
        assert (d / "inverted.wplatent").is_file()
        assert (d / "edits" / "0000.png").is_file()
        assert (d / "edits" / "0000.wplatent").is_file()
        assert (d / "edits" / "0000.json").is_file()
