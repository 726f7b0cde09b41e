"""Live session server and headless replay.

Transport is a persistent TCP connection carrying length-prefixed JSON
messages (4-byte big-endian length, UTF-8 body). Every message has a
schema version ``v``, a per-sender monotone ``seq``, and a ``type``.

Client -> server:
    hello       {keypoints: [names], dims, rate_hz}
    pose_frame  {k, pos: [[x, y] * n]}
    control     {action: start | stop | restart | record, value?}
server -> client:
    state       {k, phase, fsm, s, ps, playhead, bar, fermata, beat,
                 halted, resume}
    end_summary {original_duration, conducted_duration, pct_difference}
    error       {code, text}

Units: phases in radians, times in seconds, speeds are stretch factors
(playback rate is 1/s). One session per connection; processing within a
session is strictly serial, so state messages are emitted in pose-frame
order with strictly increasing sequence numbers.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass

import numpy as np

from . import controller as ctl
from .errors import MaestroError, ProtocolError
from .features import FeatureStream
from .kinematics import UPPER_BODY_9, KeypointSet, decimate_positions
from .phase import phase_from_sincos
from .playback import LogRow, PlaybackState, SessionLog, advance, apply_command
from .score import Score
from .synth import read_take

PROTOCOL_VERSION = 1
DEFAULT_SPEED_LIMITS = (0.25, 4.0)


def encode_message(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def read_message(sock_file) -> dict | None:
    header = sock_file.read(4)
    if len(header) < 4:
        return None
    (length,) = struct.unpack(">I", header)
    body = sock_file.read(length)
    if len(body) < length:
        return None
    return json.loads(body.decode("utf-8"))


class Session:
    """One user's pipeline: features -> estimator -> controller -> playback.

    The estimator is any object exposing begin_stream() plus either
    stream_step(state, features) -> (sin, cos) or
    stream_phase(state, features) -> phase.
    """

    def __init__(
        self,
        estimator,
        score: Score,
        cfg: ctl.ControllerConfig,
        keypoints: KeypointSet = UPPER_BODY_9,
        speed_limits: tuple[float, float] | None = DEFAULT_SPEED_LIMITS,
        session_id: str = "",
    ):
        self.estimator = estimator
        self.score = score
        self.cfg = cfg
        self.keypoints = keypoints
        self.speed_limits = speed_limits
        self.session_id = session_id
        self.recording = False
        self.recorded_frames: list[np.ndarray] = []
        self.reset()

    def reset(self):
        self.features = FeatureStream(self.keypoints)
        self.est_state = self.estimator.begin_stream()
        self.ctl_state = ctl.ControllerState()
        self.playback = PlaybackState()
        self.log = SessionLog(
            score_label=self.score.label, rate_hz=self.cfg.rate_hz,
            strategy=self.cfg.strategy.value,
        )
        self.k = 0

    def _estimate(self, feats: np.ndarray) -> float:
        if hasattr(self.estimator, "stream_phase"):
            return float(self.estimator.stream_phase(self.est_state, feats))
        sc = self.estimator.stream_step(self.est_state, feats)
        return phase_from_sincos(sc[0], sc[1])

    def process_pose(self, pos: np.ndarray) -> LogRow:
        """One control step; mirrors the offline session loop exactly."""
        pos = np.asarray(pos, dtype=float)
        if pos.shape != (self.keypoints.count, self.keypoints.dims):
            raise ProtocolError(
                f"expected pose shape {(self.keypoints.count, self.keypoints.dims)}, got {pos.shape}"
            )
        if not np.all(np.isfinite(pos)):
            raise ProtocolError("pose frame contains non-finite coordinates")
        if self.recording:
            self.recorded_frames.append(pos.copy())
        feats = self.features.push(pos)
        phase = self._estimate(feats)
        k = self.k
        wall = k / self.cfg.rate_hz
        command, beat = ctl.step(self.ctl_state, float(phase), k, self.score, self.cfg)
        if command is not None and self.speed_limits is not None:
            lo, hi = self.speed_limits
            clamped = min(max(command.speed, lo), hi)
            if clamped != command.speed:
                self.log.clamped_commands += 1
                command = ctl.SpeedCommand(speed=clamped, step=command.step,
                                           target_bar=command.target_bar,
                                           resume=command.resume)
        if beat is not None:
            self.log.beats.append(beat)
        consumed = False
        if command is not None:
            if self.log.first_command_step is None:
                self.log.first_command_step = k
            in_hold = self.playback.halted or self.playback.bar in self.score.hold_bars
            apply_command(self.playback, self.score, command, self.log, wall)
            consumed = in_hold
        if not consumed:
            advance(self.playback, self.score, 1.0 / self.cfg.rate_hz, self.log, wall)
        if self.playback.finished and self.log.finished_step is None:
            self.log.finished_step = k
        row = LogRow(
            k=k, t=wall, phase=float(phase), fsm=self.ctl_state.fsm.value,
            beat=beat.kind if beat else "",
            s_cmd=command.speed if command else None,
            resume=bool(command.resume) if command else False,
            s=self.ctl_state.speed, ps=self.playback.speed,
            playhead=self.playback.playhead, bar=self.playback.bar,
            halted=self.playback.halted,
            fermata=self.playback.bar in self.score.fermata_bars,
        )
        self.log.rows.append(row)
        self.k += 1
        return row

    def drain(self, max_steps: int | None = None) -> None:
        """Run the playhead out after the pose stream ends.

        Mirrors the offline session loop's runout: no new estimates, the
        controller state freezes, playback advances at its last speed.
        """
        if max_steps is None:
            max_steps = int(2 * self.cfg.rate_hz)
        while (not self.playback.finished and self.playback.speed > 0
               and not self.playback.halted and self.log.rows and max_steps > 0):
            max_steps -= 1
            k = self.k
            wall = k / self.cfg.rate_hz
            advance(self.playback, self.score, 1.0 / self.cfg.rate_hz, self.log, wall)
            if self.playback.finished and self.log.finished_step is None:
                self.log.finished_step = k
            last = self.log.rows[-1]
            self.log.rows.append(LogRow(
                k=k, t=wall, phase=last.phase, fsm=self.ctl_state.fsm.value, beat="",
                s_cmd=None, resume=False, s=self.ctl_state.speed, ps=self.playback.speed,
                playhead=self.playback.playhead, bar=self.playback.bar,
                halted=self.playback.halted,
                fermata=self.playback.bar in self.score.fermata_bars,
            ))
            self.k += 1

    def end_summary(self) -> dict:
        summary = self.log.summary(self.score)
        return {
            "original_duration": summary["original_duration"],
            "conducted_duration": summary["conducted_duration"],
            "pct_difference": summary["pct_difference"],
            "finished": summary["finished"],
        }


def state_message(row: LogRow, seq: int) -> dict:
    return {
        "v": PROTOCOL_VERSION, "seq": seq, "type": "state",
        "k": row.k, "phase": row.phase, "fsm": row.fsm,
        "s": row.s, "ps": row.ps, "playhead": row.playhead,
        "bar": row.bar, "fermata": row.fermata, "beat": row.beat,
        "halted": row.halted, "resume": row.resume,
    }


def replay_file(
    take_path,
    estimator,
    score: Score,
    cfg: ctl.ControllerConfig,
    *,
    speed_limits: tuple[float, float] | None = DEFAULT_SPEED_LIMITS,
) -> SessionLog:
    """Headless run of the full service pipeline over a stored take.

    The take is decimated first when its rate exceeds the controller
    rate. Deterministic: replaying twice yields identical logs.
    """
    take = read_take(take_path)
    pos = take.pos
    if take.rate.rate_hz != cfg.rate_hz:
        pos = decimate_positions(pos, take.rate.rate_hz, cfg.rate_hz)
    session = Session(estimator, score, cfg, keypoints=take.keypoints,
                      speed_limits=speed_limits)
    for frame in pos:
        session.process_pose(frame)
        if session.playback.finished:
            break
    session.drain()
    return session.log


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 7752
    speed_limits: tuple[float, float] | None = DEFAULT_SPEED_LIMITS


class _SessionHandler(socketserver.StreamRequestHandler):
    def _send(self, payload: dict) -> None:
        payload.setdefault("v", PROTOCOL_VERSION)
        payload["seq"] = self._seq
        self._seq += 1
        self.wfile.write(encode_message(payload))
        self.wfile.flush()

    def _error(self, code: str, text: str) -> None:
        self._send({"type": "error", "code": code, "text": text})

    def handle(self):
        self._seq = 0
        server: SessionServer = self.server  # type: ignore[assignment]
        session: Session | None = None
        active = False
        last_client_seq = -1
        while True:
            try:
                msg = read_message(self.rfile)
            except (json.JSONDecodeError, struct.error):
                self._error("bad-frame", "unparseable message")
                continue
            if msg is None:
                break
            seq = msg.get("seq", -1)
            if seq <= last_client_seq:
                self._error("bad-seq", f"sequence number {seq} not increasing")
                continue
            last_client_seq = seq
            mtype = msg.get("type")
            try:
                if mtype == "hello":
                    keypoints = KeypointSet(tuple(msg["keypoints"]), int(msg.get("dims", 2)))
                    if msg.get("rate_hz") != server.cfg.rate_hz:
                        self._error(
                            "rate-mismatch",
                            f"server runs at {server.cfg.rate_hz} Hz",
                        )
                        continue
                    session = server.make_session(keypoints)
                    self._send({"type": "hello_ack", "rate_hz": server.cfg.rate_hz,
                                "score_label": server.score.label})
                elif mtype == "control":
                    if session is None:
                        self._error("no-session", "send hello first")
                        continue
                    action = msg.get("action")
                    if action == "start":
                        active = True
                    elif action == "stop":
                        active = False
                        self._send({"type": "end_summary", **session.end_summary()})
                    elif action == "restart":
                        session.reset()
                        active = False
                    elif action == "record":
                        session.recording = bool(msg.get("value", True))
                    else:
                        self._error("bad-control", f"unknown action {action!r}")
                elif mtype == "pose_frame":
                    if session is None or not active:
                        self._error("not-started", "session not started")
                        continue
                    try:
                        pos = np.asarray(msg["pos"], dtype=float)
                        row = session.process_pose(pos)
                    except (MaestroError, ValueError) as exc:
                        self._error("bad-pose", str(exc))
                        continue
                    self._send(state_message(row, self._seq))
                    if session.playback.finished:
                        self._send({"type": "end_summary", **session.end_summary()})
                        active = False
                else:
                    self._error("bad-type", f"unknown message type {mtype!r}")
            except (KeyError, TypeError, ValueError) as exc:
                self._error("bad-message", f"malformed {mtype!r} message: {exc}")


class SessionServer(socketserver.ThreadingTCPServer):
    """One live-session server; each connection gets an isolated session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: ServerConfig, estimator_factory, score: Score,
                 cfg: ctl.ControllerConfig):
        self.config = config
        self.estimator_factory = estimator_factory
        self.score = score
        self.cfg = cfg
        super().__init__((config.host, config.port), _SessionHandler)

    def make_session(self, keypoints: KeypointSet) -> Session:
        return Session(
            self.estimator_factory(), self.score, self.cfg,
            keypoints=keypoints, speed_limits=self.config.speed_limits,
        )

    @property
    def bound_port(self) -> int:
        return self.socket.getsockname()[1]


def serve_forever(server: SessionServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread


class ServiceClient:
    """Minimal blocking client, used by tests and scripts."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")
        self.seq = 0

    def send(self, payload: dict) -> None:
        payload.setdefault("v", PROTOCOL_VERSION)
        payload["seq"] = self.seq
        self.seq += 1
        self.file.write(encode_message(payload))
        self.file.flush()

    def recv(self) -> dict | None:
        return read_message(self.file)

    def close(self) -> None:
        try:
            self.file.close()
        finally:
            self.sock.close()
