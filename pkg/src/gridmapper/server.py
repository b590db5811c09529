"""Wire-protocol server exposing episodes to external processes.

Transport is newline-delimited JSON over TCP (default port 7777) or stdio.
Each connection is one session holding at most one live episode; requests
within a session are processed strictly in order. Sessions are isolated and
share only the read-only dataset. Replies are canonical JSON (sorted keys,
compact separators), so identical request transcripts produce byte-identical
reply streams.

Requests:

    {"cmd": "reset", "map_id": "...", "seed": 0, "coverage_target": 0.98,
     "max_steps": 400, "predictor": "none", "delta_free": 0.93,
     "delta_obstacle": 0.95, "start": [x, y], "agent_centered": true}
    {"cmd": "step", "action": 0..7}
    {"cmd": "render"}
    {"cmd": "close"}

Replies carry {"type": "observation" | "error" | "closed", ...}; see
docs/protocol.md for the field-level reference.
"""
from __future__ import annotations

import base64
import json
import socketserver
import threading
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .environment import Episode, EpisodeConfig
from .floorplan import import_raster, load_manifest
from .grid import Pose
from .predictor import ThresholdConfig, parse_predictor

DEFAULT_PORT = 7777


def encode_observation(image: np.ndarray) -> dict:
    """Transfer encoding of a state image: base64 row-major bytes plus a
    [height, width] shape field."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    return {
        "observation": base64.b64encode(image.tobytes()).decode("ascii"),
        "shape": [int(image.shape[0]), int(image.shape[1])],
    }


def decode_observation(payload: dict) -> np.ndarray:
    h, w = payload["shape"]
    raw = base64.b64decode(payload["observation"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


class Dataset:
    """Maps of one dataset directory, preloaded and immutable."""

    def __init__(self, root: str | Path):
        manifest = load_manifest(root)
        self.maps = {
            Path(entry).stem: import_raster(manifest.root / entry)
            for entry in manifest.entries
        }

    def get(self, map_id: str):
        return self.maps.get(map_id)


class ProtocolSession:
    """Request dispatcher for one connection."""

    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._episode: Episode | None = None

    def handle_request(self, request: dict) -> tuple[dict, bool]:
        """Returns (reply, closing)."""
        if not isinstance(request, dict):
            return {"type": "error", "message": "request must be a JSON object"}, False
        cmd = request.get("cmd")
        try:
            if cmd == "reset":
                return self._reset(request), False
            if cmd == "step":
                return self._step(request), False
            if cmd == "render":
                return self._render(), False
            if cmd == "close":
                self.close()
                return {"type": "closed"}, True
            return {"type": "error", "message": f"unknown command {cmd!r}"}, False
        except (KeyError, TypeError, ValueError) as exc:
            return {"type": "error", "message": str(exc)}, False

    def _observation_reply(self, image, reward: float | None = None) -> dict:
        episode = self._episode
        assert episode is not None and episode.state is not None
        state = episode.state
        reply = {
            "type": "observation",
            "step": state.step_count,
            "coverage": state.exposure,
            "done": state.done,
            "success": state.success,
        }
        reply.update(encode_observation(image))
        if reward is not None:
            reply["reward"] = reward
        return reply

    def _reset(self, request: dict) -> dict:
        map_id = request.get("map_id")
        if not isinstance(map_id, str):
            return {"type": "error", "message": "reset requires a map_id string"}
        gt = self._dataset.get(map_id)
        if gt is None:
            return {"type": "error", "message": f"unknown map id {map_id!r}"}
        thresholds = ThresholdConfig(
            delta_free=float(request.get("delta_free", 0.93)),
            delta_obstacle=float(request.get("delta_obstacle", 0.95)),
        )
        cfg = EpisodeConfig(
            coverage_target=float(request.get("coverage_target", 0.98)),
            max_steps=int(request.get("max_steps", 400)),
            agent_centered_rendering=bool(request.get("agent_centered", True)),
            predictor=parse_predictor(str(request.get("predictor", "none"))),
            thresholds=thresholds,
            seed=int(request.get("seed", 0)),
        )
        start = request.get("start")
        pose = None
        if start is not None:
            pose = Pose(int(start[0]), int(start[1]))
        if self._episode is not None:
            self._episode.close()
        self._episode = Episode(gt, cfg)
        _, image = self._episode.reset(pose)
        return self._observation_reply(image)

    def _step(self, request: dict) -> dict:
        if self._episode is None or self._episode.state is None:
            return {"type": "error", "message": "no active episode"}
        if self._episode.state.done:
            return {"type": "error", "message": "episode is done"}
        action = request.get("action")
        if not isinstance(action, int) or not (0 <= action <= 7):
            return {"type": "error", "message": "action must be an integer in 0..7"}
        result = self._episode.step(action)
        return self._observation_reply(result.image, reward=result.reward)

    def _render(self) -> dict:
        if self._episode is None or self._episode.state is None:
            return {"type": "error", "message": "no active episode"}
        return self._observation_reply(self._episode.render())

    def close(self) -> None:
        if self._episode is not None:
            self._episode.close()
            self._episode = None


def _reply_bytes(reply: dict) -> bytes:
    return json.dumps(reply, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def serve_stream(dataset: Dataset, rfile: BinaryIO, wfile: BinaryIO) -> None:
    """Run one session over a byte stream until EOF or a close command."""
    session = ProtocolSession(dataset)
    try:
        for line in rfile:
            if not line.strip():
                continue
            try:
                request = json.loads(line)
            except json.JSONDecodeError as exc:
                reply, closing = {"type": "error", "message": f"bad JSON: {exc}"}, False
            else:
                reply, closing = session.handle_request(request)
            wfile.write(_reply_bytes(reply))
            wfile.flush()
            if closing:
                break
    finally:
        session.close()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        serve_stream(self.server.dataset, self.rfile, self.wfile)  # type: ignore[attr-defined]


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EnvironmentServer:
    """TCP server handle usable from tests and the CLI."""

    def __init__(self, dataset_root: str | Path, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.dataset = Dataset(dataset_root)
        self._server = _ThreadingServer((host, port), _Handler)
        self._server.dataset = self.dataset  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def start(self) -> "EnvironmentServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "EnvironmentServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()


def serve_stdio(dataset_root: str | Path) -> None:
    import sys

    serve_stream(Dataset(dataset_root), sys.stdin.buffer, sys.stdout.buffer)
