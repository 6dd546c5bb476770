"""HTTP/websocket playground service, validated against the vendored schema."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import jsonschema
import pytest
from fastapi.testclient import TestClient

from conftest import fuzz_params

from engramnca.grid import ChannelLayout
from engramnca.models import ROLE_GENE, ROLE_PROP
from engramnca.persistence import load_checkpoint_as, save_checkpoint
from engramnca.service import create_app
from engramnca.session import SimulationEngine

SCHEMA = json.loads(
    (Path(__file__).resolve().parent.parent / "schemas" / "ws_protocol.schema.json")
    .read_text())


def _validator(definition: str) -> jsonschema.Draft7Validator:
    return jsonschema.Draft7Validator(
        {"definitions": SCHEMA["definitions"], "$ref": f"#/definitions/{definition}"})

VALID_SERVER = _validator("server_message")
VALID_CLIENT = _validator("client_message")


def recv(ws) -> dict:
    message = ws.receive_json()
    VALID_SERVER.validate(message)
    return message


def send(ws, message: dict) -> None:
    VALID_CLIENT.validate(message)
    ws.send_json(message)


@pytest.fixture(scope="module")
def checkpoint_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpts")
    layout = ChannelLayout.standard()
    gene = fuzz_params(ROLE_GENE, layout, hidden_units=16, seed=7)
    gene.w2.data *= 0.1
    save_checkpoint(gene, root / "gene.nca", rng_seed=7)
    prop = fuzz_params(ROLE_PROP, layout, hidden_units=12, seed=8)
    prop.w2.data *= 0.1
    save_checkpoint(prop, (root / "sub").mkdir() or root / "sub" / "prop.nca",
                    rng_seed=8)
    (root / "notes.txt").write_text("not a checkpoint")
    (root / "broken.nca").write_bytes(b"\x00\x01 definitely not a zip")
    return root


@pytest.fixture(scope="module")
def client(checkpoint_root):
    with TestClient(create_app(checkpoint_root)) as c:
        yield c


def make_session(client, **overrides) -> dict:
    body = {"checkpoint": "gene.nca", "rng_seed": 5, "grid": {"h": 16, "w": 16}}
    body.update(overrides)
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


class TestCheckpointIndex:
    def test_lists_only_loadable_checkpoints(self, client):
        entries = client.get("/checkpoints").json()["checkpoints"]
        by_path = {e["path"]: e for e in entries}
        assert set(by_path) == {"gene.nca", "sub/prop.nca"}

    def test_entry_shape(self, client):
        entries = client.get("/checkpoints").json()["checkpoints"]
        gene = next(e for e in entries if e["path"] == "gene.nca")
        assert gene["role"] == ROLE_GENE
        assert gene["hidden_units"] == 16
        assert gene["layout"]["n_gene"] == 8 and gene["layout"]["n_total"] == 16
        prop = next(e for e in entries if e["path"] == "sub/prop.nca")
        assert prop["role"] == ROLE_PROP


class TestSessionLifecycle:
    def test_create_returns_descriptor(self, client):
        info = make_session(client)
        assert info["id"].startswith("s")
        assert (info["width"], info["height"]) == (16, 16)
        assert info["has_prop"] is False
        assert info["rng_seed"] == 5
        assert info["layout"]["n_total"] == 16

    def test_create_with_prop(self, client):
        info = make_session(client, prop_checkpoint="sub/prop.nca")
        assert info["has_prop"] is True

    def test_default_grid_is_30(self, client):
        response = client.post("/sessions", json={"checkpoint": "gene.nca"})
        assert response.status_code == 200
        body = response.json()
        assert (body["width"], body["height"]) == (30, 30)

    def test_missing_checkpoint_404(self, client):
        response = client.post("/sessions", json={"checkpoint": "ghost.nca"})
        assert response.status_code == 404

    def test_path_escape_rejected(self, client):
        response = client.post("/sessions", json={"checkpoint": "../../etc/passwd"})
        assert response.status_code in (400, 404)

    def test_wrong_role_400(self, client):
        response = client.post("/sessions", json={"checkpoint": "sub/prop.nca"})
        assert response.status_code == 400
        detail = response.json()["detail"]
        assert detail["code"] == "ConfigError"

    def test_corrupt_checkpoint_400(self, client):
        response = client.post("/sessions", json={"checkpoint": "broken.nca"})
        assert response.status_code == 400

    def test_grid_bounds_enforced(self, client):
        response = client.post("/sessions", json={"checkpoint": "gene.nca",
                                                  "grid": {"h": 1, "w": 1}})
        assert response.status_code == 422

    def test_log_unknown_session_404(self, client):
        assert client.get("/sessions/sZZZ/log").status_code == 404

    def test_delete(self, client):
        sid = make_session(client)["id"]
        assert client.delete(f"/sessions/{sid}").json() == {"closed": sid}
        assert client.delete(f"/sessions/{sid}").status_code == 404
        assert client.get(f"/sessions/{sid}/log").status_code == 404


class TestWebsocket:
    def test_initial_frame(self, client):
        sid = make_session(client)["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            frame = recv(ws)
            assert frame["type"] == "frame"
            assert frame["step"] == 0
            assert frame["alive_count"] == 0
            assert (frame["width"], frame["height"]) == (16, 16)
            rgba = base64.b64decode(frame["rgba"])
            assert len(rgba) == 16 * 16 * 4
            assert len(base64.b64decode(frame["gene_rgb"])) == 16 * 16 * 3

    def test_unknown_session_errors_and_closes(self, client):
        with client.websocket_connect("/ws/session/nope") as ws:
            message = recv(ws)
            assert message["type"] == "error"
            assert message["code"] == "ConfigError"

    def test_seed_then_step(self, client):
        sid = make_session(client)["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "place_seed", "x": 8, "y": 8,
                                "bits": "10000000"}})
            frame = recv(ws)
            assert frame["step"] == 0
            assert frame["alive_count"] >= 1
            send(ws, {"type": "intervene", "event": {"type": "step", "n": 4}})
            frame = recv(ws)
            assert frame["step"] == 4

    def test_bad_event_keeps_session_alive(self, client):
        sid = make_session(client)["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            ws.send_json({"type": "intervene", "event": {"type": "conjure"}})
            message = recv(ws)
            assert message["type"] == "error"
            assert message["code"] == "ConfigError"
            assert "conjure" in message["message"]
            send(ws, {"type": "intervene", "event": {"type": "step", "n": 1}})
            assert recv(ws)["step"] == 1

    def test_unknown_message_type_errors(self, client):
        sid = make_session(client)["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            ws.send_json({"type": "teleport"})
            message = recv(ws)
            assert message["type"] == "error"
            send(ws, {"type": "intervene", "event": {"type": "step", "n": 1}})
            assert recv(ws)["step"] == 1

    def test_damage_and_rates_round_trip(self, client):
        sid = make_session(client, prop_checkpoint="sub/prop.nca")["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "place_seed", "x": 8, "y": 8,
                                "bits": "00000001"}})
            assert recv(ws)["alive_count"] >= 1
            send(ws, {"type": "intervene",
                      "event": {"type": "set_rate", "gene_every": 1,
                                "prop_every": 2}})
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "toggle_prop", "enabled": False}})
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "damage", "x": 8, "y": 8, "r": 3}})
            frame = recv(ws)
            assert frame["alive_count"] == 0

    def test_play_streams_then_pause(self, client):
        sid = make_session(client)["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "place_seed", "x": 8, "y": 8,
                                "bits": "10000000"}})
            recv(ws)
            send(ws, {"type": "play"})
            first = recv(ws)
            second = recv(ws)
            assert second["step"] == first["step"] + 1
            send(ws, {"type": "pause"})


class TestLogReplay:
    def test_socket_session_replays_offline_bit_for_bit(self, client,
                                                        checkpoint_root):
        info = make_session(client, rng_seed=11)
        sid = info["id"]
        with client.websocket_connect(f"/ws/session/{sid}") as ws:
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "place_seed", "x": 8, "y": 8,
                                "bits": "10000000"}})
            recv(ws)
            send(ws, {"type": "intervene", "event": {"type": "step", "n": 6}})
            recv(ws)
            send(ws, {"type": "intervene",
                      "event": {"type": "damage", "x": 9, "y": 8, "r": 2}})
            recv(ws)
            send(ws, {"type": "intervene", "event": {"type": "step", "n": 5}})
            last = recv(ws)

        log = client.get(f"/sessions/{sid}/log").json()
        assert log["step"] == 11
        gene_params, _ = load_checkpoint_as(checkpoint_root / "gene.nca", ROLE_GENE)
        offline = SimulationEngine(gene_params, None, gene_params.layout, 16, 16,
                                   rng_seed=log["rng_seed"])
        offline.replay_log(log["log"])
        assert base64.b64decode(last["rgba"]) == offline.rgba_bytes()
        assert offline.tick == 11
