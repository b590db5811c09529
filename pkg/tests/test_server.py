import base64
import io
import json
import socket
import threading

import numpy as np
import pytest

from gridmapper.environment import Episode, EpisodeConfig
from gridmapper.floorplan import GeneratorConfig, export_raster, generate_floorplan, write_manifest
from gridmapper.grid import Action, ObservationGrid
from gridmapper.predictor import PredictorError, RemotePredictorClient
from gridmapper.server import (
    Dataset,
    EnvironmentServer,
    decode_observation,
    encode_observation,
    serve_stream,
)


@pytest.fixture(scope="module")
def dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    entries = []
    for i in range(2):
        gt = generate_floorplan(GeneratorConfig(seed=200 + i))
        entry = f"d1_{i:04d}.map"
        export_raster(gt, root / entry)
        entries.append(entry)
    write_manifest(root, entries)
    return root


class Client:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.file = self.sock.makefile("rwb")

    def call(self, request: dict) -> dict:
        self.file.write(json.dumps(request).encode() + b"\n")
        self.file.flush()
        return json.loads(self.file.readline())

    def raw(self, data: bytes) -> dict:
        self.file.write(data)
        self.file.flush()
        return json.loads(self.file.readline())

    def close(self):
        self.file.close()
        self.sock.close()


def test_encode_observation_roundtrip():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, size=(7, 5)).astype(np.uint8)
    payload = encode_observation(img)
    assert payload["shape"] == [7, 5]
    assert np.array_equal(decode_observation(payload), img)
    one = encode_observation(np.array([[255]], dtype=np.uint8))
    assert base64.b64decode(one["observation"]) == b"\xff"


def test_reset_step_render_close(dataset_root):
    with EnvironmentServer(dataset_root, port=0).start() as server:
        client = Client(server.port)
        reply = client.call(
            {"cmd": "reset", "map_id": "d1_0000", "seed": 7,
             "coverage_target": 0.98, "predictor": "none"}
        )
        assert reply["type"] == "observation"
        assert reply["step"] == 0
        assert not reply["done"]
        assert reply["shape"] == [62, 64]
        image = decode_observation(reply)
        assert image[31, 32] == 255  # agent-centered by default

        step = client.call({"cmd": "step", "action": 2})
        assert step["type"] == "observation"
        assert "reward" in step and step["step"] == 1
        render = client.call({"cmd": "render"})
        assert render["type"] == "observation"
        assert render["step"] == 1
        assert "reward" not in render
        closed = client.call({"cmd": "close"})
        assert closed == {"type": "closed"}
        client.close()


def test_errors_keep_session_alive(dataset_root):
    with EnvironmentServer(dataset_root, port=0).start() as server:
        client = Client(server.port)
        reply = client.call({"cmd": "step", "action": 2})
        assert reply["type"] == "error"
        assert "no active episode" in reply["message"]
        reply = client.call({"cmd": "reset", "map_id": "nope"})
        assert reply["type"] == "error" and "unknown map id" in reply["message"]
        reply = client.raw(b"this is not json\n")
        assert reply["type"] == "error"
        reply = client.call({"cmd": "warp"})
        assert reply["type"] == "error"
        reply = client.call({"cmd": "reset", "map_id": "d1_0000", "seed": 1})
        assert reply["type"] == "observation"
        reply = client.call({"cmd": "step", "action": 99})
        assert reply["type"] == "error"
        client.close()


def test_server_matches_in_process_episode(dataset_root):
    actions = [int(a) for a in np.random.default_rng(8).integers(8, size=40)]
    gt = Dataset(dataset_root).get("d1_0001")
    env = Episode(gt, EpisodeConfig(coverage_target=0.98, max_steps=400, seed=21))
    state, _ = env.reset()
    expected = []
    for action in actions:
        if state.done:
            break
        result = env.step(Action(action))
        expected.append((result.reward, result.done, state.exposure))

    with EnvironmentServer(dataset_root, port=0).start() as server:
        client = Client(server.port)
        client.call({"cmd": "reset", "map_id": "d1_0001", "seed": 21})
        got = []
        for action in actions:
            reply = client.call({"cmd": "step", "action": action})
            if reply["type"] == "error":
                break
            got.append((reply["reward"], reply["done"], reply["coverage"]))
            if reply["done"]:
                break
        client.close()
    assert got == expected


def test_transcript_replay_byte_identical(dataset_root):
    dataset = Dataset(dataset_root)
    transcript = b"".join(
        json.dumps(req).encode() + b"\n"
        for req in [
            {"cmd": "reset", "map_id": "d1_0000", "seed": 5, "coverage_target": 0.9},
            {"cmd": "step", "action": 4},
            {"cmd": "step", "action": 3},
            {"cmd": "render"},
            {"cmd": "step", "action": 0},
            {"cmd": "close"},
        ]
    )
    outputs = []
    for _ in range(2):
        out = io.BytesIO()
        serve_stream(dataset, io.BytesIO(transcript), out)
        outputs.append(out.getvalue())
    assert outputs[0] == outputs[1]
    assert outputs[0].strip().endswith(b'{"type":"closed"}')


def test_sessions_are_isolated(dataset_root):
    with EnvironmentServer(dataset_root, port=0).start() as server:
        a, b = Client(server.port), Client(server.port)
        ra = a.call({"cmd": "reset", "map_id": "d1_0000", "seed": 1})
        rb = b.call({"cmd": "step", "action": 1})
        assert ra["type"] == "observation"
        assert rb["type"] == "error"  # session b has no episode
        a.close()
        b.close()


def _predictor_server(handler, port_holder, stop):
    """Minimal predictor-protocol server for client tests."""
    srv = socket.create_server(("127.0.0.1", 0))
    port_holder.append(srv.getsockname()[1])
    srv.settimeout(0.2)
    while not stop.is_set():
        try:
            conn, _ = srv.accept()
        except TimeoutError:
            continue
        with conn, conn.makefile("rwb") as f:
            for line in f:
                request = json.loads(line)
                f.write(handler(request) + b"\n")
                f.flush()
    srv.close()


@pytest.fixture
def predictor_server():
    def start(handler):
        port_holder: list[int] = []
        stop = threading.Event()
        thread = threading.Thread(
            target=_predictor_server, args=(handler, port_holder, stop), daemon=True
        )
        thread.start()
        while not port_holder:
            pass
        cleanup.append((stop, thread))
        return port_holder[0]

    cleanup: list = []
    yield start
    for stop, thread in cleanup:
        stop.set()
        thread.join(timeout=2)


def test_remote_predictor_client_roundtrip(predictor_server):
    def handler(request):
        assert request["type"] == "predict"
        w, h = request["width"], request["height"]
        cells = np.frombuffer(base64.b64decode(request["cells"]), dtype=np.uint8)
        assert cells.size == w * h
        values = np.full(w * h, 0.25, dtype="<f4")
        return json.dumps(
            {"type": "probabilities",
             "values": base64.b64encode(values.tobytes()).decode()}
        ).encode()

    port = predictor_server(handler)
    obs = ObservationGrid.all_unknown(6, 4)
    with RemotePredictorClient(f"127.0.0.1:{port}") as client:
        p = client.predict(obs)
        assert p.values.shape == (4, 6)
        assert (p.values == 0.25).all()


def test_remote_predictor_error_reply(predictor_server):
    def handler(request):
        return json.dumps({"type": "error", "message": "model not loaded"}).encode()

    port = predictor_server(handler)
    with RemotePredictorClient(f"127.0.0.1:{port}") as client:
        with pytest.raises(PredictorError, match="model not loaded"):
            client.predict(ObservationGrid.all_unknown(3, 3))


def test_remote_predictor_bad_payload(predictor_server):
    def handler(request):
        return json.dumps({"type": "probabilities", "values": "AAAA"}).encode()

    port = predictor_server(handler)
    with RemotePredictorClient(f"127.0.0.1:{port}") as client:
        with pytest.raises(PredictorError):
            client.predict(ObservationGrid.all_unknown(3, 3))


def test_remote_predictor_unreachable():
    client = RemotePredictorClient("127.0.0.1:1")
    with pytest.raises(PredictorError):
        client.predict(ObservationGrid.all_unknown(2, 2))


def test_episode_falls_back_to_null_on_predictor_failure(small_map):
    from gridmapper.predictor import RemotePredictor

    cfg = EpisodeConfig(predictor=RemotePredictor("127.0.0.1:1"), seed=4)
    env = Episode(small_map, cfg)
    state, _ = env.reset()
    # Fallback behaves like the null predictor: synthesized equals obs.
    assert np.array_equal(state.synthesized.cells, state.obs.cells)
    env.close()


def test_remote_predictor_through_episode(dataset_root, predictor_server, small_map):
    # A server that marks everything free with certainty: the episode should
    # finish immediately at full synthesized coverage.
    def handler(request):
        w, h = request["width"], request["height"]
        values = np.zeros(w * h, dtype="<f4")
        return json.dumps(
            {"type": "probabilities",
             "values": base64.b64encode(values.tobytes()).decode()}
        ).encode()

    port = predictor_server(handler)
    from gridmapper.predictor import RemotePredictor

    cfg = EpisodeConfig(predictor=RemotePredictor(f"127.0.0.1:{port}"), seed=4)
    with Episode(small_map, cfg) as env:
        state, _ = env.reset()
        assert state.exposure == 1.0
        assert state.done and state.success