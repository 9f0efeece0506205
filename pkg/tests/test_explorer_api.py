import base64
import hashlib

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vesselspace.explorer_api import create_app
from vesselspace.pipeline import ARTIFACTS, artifact_path, read_features_csv


@pytest.fixture(scope="module")
def client(micro_run):
    _, out_dir = micro_run
    return TestClient(create_app(out_dir))


def unpack_bits(b64_payload, count):
    raw = np.frombuffer(base64.b64decode(b64_payload), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:count]


class TestSpaces:
    def test_both_spaces_with_all_points(self, client):
        body = client.get("/api/spaces").json()
        assert set(body) == {"spaces"}
        kinds = [s["kind"] for s in body["spaces"]]
        assert kinds == ["parametric", "feature"]
        for space in body["spaces"]:
            assert len(space["points"]) == 40
            ids = [p["id"] for p in space["points"]]
            assert sorted(ids) == list(range(40))
            for p in space["points"][:3]:
                assert set(p) == {"id", "x", "y", "cluster"}
                assert isinstance(p["cluster"], int)

    def test_every_id_in_both_spaces_once(self, client):
        body = client.get("/api/spaces").json()
        per_kind = {
            s["kind"]: sorted(p["id"] for p in s["points"]) for s in body["spaces"]
        }
        assert per_kind["parametric"] == per_kind["feature"]


class TestVessel:
    def test_detail_fields(self, client, micro_run):
        _, out_dir = micro_run
        body = client.get("/api/vessel/0").json()
        assert set(body) >= {"id", "params", "latent", "section", "occupied_count"}
        assert set(body["params"]) == {
            "height", "base_width", "top_width", "ctrl_r", "ctrl_h"
        }
        assert len(body["latent"]) == 16
        bits = unpack_bits(body["section"], 16 * 16)
        assert bits.shape == (256,)
        assert body["occupied_count"] > 0

    def test_latent_matches_features_csv(self, client, micro_run):
        _, out_dir = micro_run
        fids, feats = read_features_csv(artifact_path(out_dir, "features"))
        row = feats[list(fids).index(5)]
        body = client.get("/api/vessel/5").json()
        assert np.allclose(body["latent"], row, atol=1e-6)

    def test_unknown_id_404(self, client):
        resp = client.get("/api/vessel/-1")
        assert resp.status_code == 404
        assert "error" in resp.json()


class TestDecode:
    def test_decode_stored_latent_reports_quality(self, client, micro_run):
        _, out_dir = micro_run
        latent = client.get("/api/vessel/3").json()["latent"]
        resp = client.post("/api/decode", json={"z": latent})
        assert resp.status_code == 200
        body = resp.json()
        assert set(body) == {"resolution", "voxels", "occupied_count", "section"}
        voxels = unpack_bits(body["voxels"], 16**3).reshape(16, 16, 16)
        stored = client.get("/api/vessel/3").json()
        stored_bits = unpack_bits(stored["section"], 256)
        # reconstruction quality is reported, not asserted
        inter = np.logical_and(voxels.sum(), 1)
        assert body["occupied_count"] == int(voxels.sum())

    def test_repeat_requests_identical(self, client):
        z = [0.1] * 16
        a = client.post("/api/decode", json={"z": z})
        b = client.post("/api/decode", json={"z": z})
        assert a.content == b.content

    def test_wrong_length_400(self, client):
        resp = client.post("/api/decode", json={"z": [0.0] * 15})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_nonfinite_400(self, client):
        # strict JSON cannot carry NaN; permissive parsers pass the token through
        values = ", ".join(["0.0"] * 15 + ["NaN"])
        resp = client.post(
            "/api/decode",
            content='{"z": [' + values + "]}",
            headers={"content-type": "application/json"},
        )
        assert resp.status_code == 400
        assert "nonfinite" in resp.json()["error"]

    def test_threshold_changes_count(self, client):
        z = [0.0] * 16
        low = client.post("/api/decode", json={"z": z, "threshold": 0.05}).json()
        high = client.post("/api/decode", json={"z": z, "threshold": 0.95}).json()
        assert low["occupied_count"] >= high["occupied_count"]


class TestInterpolate:
    def test_endpoints_match_decode(self, client):
        za = client.get("/api/vessel/1").json()["latent"]
        zb = client.get("/api/vessel/2").json()["latent"]
        interp = client.post(
            "/api/interpolate", json={"id_a": 1, "id_b": 2, "steps": 2}
        ).json()
        assert [s["alpha"] for s in interp["steps"]] == [0.0, 1.0]
        dec_a = client.post("/api/decode", json={"z": za}).json()
        dec_b = client.post("/api/decode", json={"z": zb}).json()
        assert interp["steps"][0]["section"] == dec_a["section"]
        assert interp["steps"][1]["section"] == dec_b["section"]

    def test_same_endpoint_all_steps_identical(self, client):
        interp = client.post(
            "/api/interpolate", json={"id_a": 4, "id_b": 4, "steps": 5}
        ).json()
        sections = {s["section"] for s in interp["steps"]}
        assert len(sections) == 1

    def test_alphas_evenly_spaced(self, client):
        interp = client.post(
            "/api/interpolate", json={"id_a": 0, "id_b": 1, "steps": 6}
        ).json()
        alphas = [s["alpha"] for s in interp["steps"]]
        assert np.allclose(alphas, np.linspace(0, 1, 6))

    def test_bad_requests(self, client):
        assert client.post(
            "/api/interpolate", json={"id_a": 0, "id_b": 1, "steps": 1}
        ).status_code == 400
        assert client.post(
            "/api/interpolate", json={"id_a": 0, "id_b": 999, "steps": 4}
        ).status_code == 404
        assert client.post("/api/interpolate", json={"id_a": 0}).status_code == 400


class TestImmutability:
    def test_requests_leave_artifacts_untouched(self, micro_run):
        _, out_dir = micro_run
        def digest():
            out = {}
            for name in ARTIFACTS:
                p = artifact_path(out_dir, name)
                out[name] = hashlib.sha256(p.read_bytes()).hexdigest()
            return out

        before = digest()
        local = TestClient(create_app(out_dir))
        local.get("/api/spaces")
        local.get("/api/vessel/0")
        local.post("/api/decode", json={"z": [0.2] * 16})
        local.post("/api/interpolate", json={"id_a": 0, "id_b": 1, "steps": 4})
        assert digest() == before
