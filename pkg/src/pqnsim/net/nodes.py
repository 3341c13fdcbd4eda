"""The three node daemons and the 16-step measurement choreography.

Topology: the source-lab daemon owns the simulation bench, its own
analysis motor, and the session executor; the closet daemon drives the
remote basis motor; the kiosk gateway (see ``gateway_http``) initiates
runs on behalf of the public station.  All control traffic is framed
messages over plain TCP with a shared-token handshake - the deployment
assumes a trusted private network, and transport security is explicitly
out of scope.

Concurrency: each daemon runs one accept loop and per-connection reader
threads that post messages to a single inbox; session state lives only in
the source daemon's executor thread.  One session runs at a time; a second
request is answered with a BUSY error.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import queue
import socket
import threading
import time
import uuid

from ..chsh import MeasurementMatrix, chsh_from_matrix, settings_from_user
from ..engine import ExperimentEngine, waveplate_motion
from .config import AppConfig
from .logstore import ExperimentLogEntry, append_log, check_writable
from .protocol import (
    PROTOCOL_VERSION,
    AngleSet,
    ChshResultMsg,
    CountReport,
    ErrorMsg,
    FrameDecoder,
    Hello,
    Message,
    Progress,
    ProtocolError,
    RunChsh,
    SetAngle,
    StartCount,
    encode_message,
)

log = logging.getLogger(__name__)

_RECV_CHUNK = 65536


class Connection:
    """One framed TCP connection; received messages go to the owner's inbox."""

    def __init__(self, sock: socket.socket, inbox: "queue.Queue", label: str):
        self.sock = sock
        self.inbox = inbox
        self.label = label
        self.peer_role: str | None = None
        self.alive = True
        self._send_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def send(self, message: Message) -> bool:
        data = encode_message(message)
        with self._send_lock:
            try:
                self.sock.sendall(data)
                return True
            except OSError:
                self.alive = False
                return False

    def _read_loop(self) -> None:
        decoder = FrameDecoder()
        try:
            while True:
                data = self.sock.recv(_RECV_CHUNK)
                if not data:
                    break
                for message in decoder.feed(data):
                    self.inbox.put((self, message))
        except (OSError, ProtocolError) as exc:
            log.debug("connection %s dropped: %s", self.label, exc)
        finally:
            self.alive = False
            self.inbox.put((self, None))

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class BaseDaemon:
    """Accept loop plus an inbox-driven dispatcher thread."""

    role = "unset"

    def __init__(self, host: str, port: int, token: str):
        self.host = host
        self.port = port
        self.token = token
        self.inbox: queue.Queue = queue.Queue()
        self.connections: list[Connection] = []
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(8)
        self._listener = listener
        self.port = listener.getsockname()[1]  # resolve port 0
        self._spawn(self._accept_loop)
        self._spawn(self._dispatch_loop)

    def _spawn(self, fn) -> None:
        t = threading.Thread(target=fn, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            conn = Connection(sock, self.inbox, f"{self.role}<-{addr[0]}:{addr[1]}")
            self.connections.append(conn)

    def _dispatch_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, message = self.inbox.get(timeout=0.2)
            except queue.Empty:
                continue
            if message is None:
                if conn in self.connections:
                    self.connections.remove(conn)
                continue
            try:
                self.handle(conn, message)
            except Exception:
                log.exception("%s failed handling %s", self.role, message)

    def _check_hello(self, conn: Connection, message: Hello) -> bool:
        if message.version != PROTOCOL_VERSION:
            conn.send(ErrorMsg("VERSION", f"speaking {PROTOCOL_VERSION}"))
            conn.close()
            return False
        if message.token != self.token:
            conn.send(ErrorMsg("AUTH", "bad token"))
            conn.close()
            return False
        conn.peer_role = message.role
        conn.send(Hello(role=self.role, version=PROTOCOL_VERSION, token=self.token))
        return True

    def handle(self, conn: Connection, message: Message) -> None:
        raise NotImplementedError

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        for conn in list(self.connections):
            conn.close()


class MotorSim:
    """Rotation-mount model shared by both measurement arms.

    The analyzer angle maps to half the motor angle (half-wave analysis),
    so a 90-degree port offset is a 45-degree motor move.
    """

    def __init__(self, speed_deg_s: float, settle_s: float, time_scale: float):
        self.speed_deg_s = speed_deg_s
        self.settle_s = settle_s
        self.time_scale = time_scale
        self.motor_deg = 0.0

    def move_to_analyzer(self, analyzer_deg: float) -> float:
        target_motor = analyzer_deg / 2.0
        delay = waveplate_motion(
            self.motor_deg, target_motor, self.speed_deg_s, self.settle_s
        )
        if self.time_scale > 0:
            time.sleep(delay * self.time_scale)
        self.motor_deg = target_motor
        return analyzer_deg


class ClosetNode(BaseDaemon):
    """Remote basis motor for the arm that travels through the public site."""

    role = "closet_waveplate"

    def __init__(self, config: AppConfig, port: int | None = None):
        nodes = config.nodes
        super().__init__(nodes.closet_host, nodes.closet_port if port is None else port,
                         nodes.token)
        self.motor = MotorSim(
            nodes.motor_speed_deg_s, nodes.settle_s,
            1.0 if nodes.realtime else 0.0,
        )
        self.duplicate_responses = False  # test hook: exactly-once accounting

    def handle(self, conn: Connection, message: Message) -> None:
        if isinstance(message, Hello):
            self._check_hello(conn, message)
        elif isinstance(message, SetAngle):
            actual = self.motor.move_to_analyzer(message.angle_deg)
            reply = AngleSet(request_id=message.request_id, actual_angle_deg=actual)
            conn.send(reply)
            if self.duplicate_responses:
                conn.send(reply)
        else:
            conn.send(ErrorMsg("UNEXPECTED", type(message).__name__))


class SessionTranscript:
    """Ordered record of every choreography message, for auditing."""

    def __init__(self) -> None:
        self._events: list[tuple[str, Message]] = []
        self._lock = threading.Lock()

    def add(self, direction: str, message: Message) -> None:
        with self._lock:
            self._events.append((direction, message))

    def events(self) -> list[tuple[str, Message]]:
        with self._lock:
            return list(self._events)

    def type_sequence(self) -> list[str]:
        return [type(m).TYPE for _, m in self.events()]


class SessionFailed(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class SourceNode(BaseDaemon):
    """Owns the bench, the local analysis motor, and the session executor."""

    role = "source_lab"

    def __init__(
        self,
        config: AppConfig,
        engine: ExperimentEngine | None = None,
        port: int | None = None,
    ):
        nodes = config.nodes
        super().__init__(nodes.source_host, nodes.source_port if port is None else port,
                         nodes.token)
        self.config = config
        if engine is None:
            from ..channel import FiberChannel, SourceConfig

            engine = ExperimentEngine(
                src=SourceConfig(
                    pair_rate_cps=config.source.pair_rate_cps,
                    heralding_efficiency=config.source.heralding_efficiency,
                    visibility=config.source.visibility,
                ),
                channel=FiberChannel(
                    loss_db=config.channel.loss_db,
                    wavelengths_nm=config.channel.wavelengths_nm,
                    drift_rate_bound_deg_per_hr=config.channel.drift_rate_bound_deg_per_hr,
                    seed=config.channel.seed,
                ),
                station_loss_db=config.channel.station_loss_db,
                seed=config.channel.seed,
                drift_enabled=config.channel.drift_enabled,
            )
        self.engine = engine
        self.local_motor = MotorSim(
            nodes.motor_speed_deg_s, nodes.settle_s,
            1.0 if nodes.realtime else 0.0,
        )
        self.time_scale = 1.0 if nodes.realtime else 0.0
        self.step_timeout_s = nodes.step_timeout_s
        self.log_path = nodes.log_path
        check_writable(self.log_path)

        self._closet: Connection | None = None
        self._closet_inbox: queue.Queue = queue.Queue()
        self._next_request_id = 0
        self._pending: dict[int, dict] = {}
        self._answered: set[int] = set()
        self.dropped_responses = 0
        self._session_lock = threading.Lock()
        self.last_transcript: SessionTranscript | None = None

    # -- closet client ------------------------------------------------------

    def connect_closet(self, host: str, port: int, timeout: float = 5.0) -> None:
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        conn = Connection(sock, self.inbox, "source->closet")
        conn.send(Hello(role=self.role, version=PROTOCOL_VERSION, token=self.token))
        self._closet = conn

    def closet_ready(self) -> bool:
        return self._closet is not None and self._closet.alive and (
            self._closet.peer_role == "closet_waveplate"
        )

    # -- message routing ----------------------------------------------------

    def handle(self, conn: Connection, message: Message) -> None:
        if isinstance(message, Hello):
            if conn is self._closet:
                conn.peer_role = message.role  # reply to our client handshake
            else:
                self._check_hello(conn, message)
        elif isinstance(message, (AngleSet, CountReport)):
            self._accept_response(message)
        elif isinstance(message, RunChsh):
            self._start_session(conn, message)
        elif isinstance(message, ErrorMsg):
            log.warning("peer error on %s: %s %s", conn.label, message.code, message.detail)
        else:
            conn.send(ErrorMsg("UNEXPECTED", type(message).__name__))

    def _accept_response(self, message: AngleSet | CountReport) -> None:
        rid = message.request_id
        slot = self._pending.pop(rid, None)
        if slot is None:
            # exactly-once accounting: duplicates and strays are dropped
            self.dropped_responses += 1
            log.warning("dropped duplicate/unknown response id=%s", rid)
            return
        self._answered.add(rid)
        slot["message"] = message
        slot["event"].set()

    def _new_request(self) -> tuple[int, dict]:
        self._next_request_id += 1
        slot = {"event": threading.Event(), "message": None}
        self._pending[self._next_request_id] = slot
        return self._next_request_id, slot

    # -- session execution --------------------------------------------------

    def _start_session(self, requester: Connection, request: RunChsh) -> None:
        if not all(
            isinstance(x, (int, float)) and math.isfinite(x)
            for x in (request.a, request.a_prime, request.integration_s)
        ):
            requester.send(ErrorMsg("BAD_ANGLE", "angles must be finite numbers"))
            return
        if request.integration_s <= 0:
            requester.send(ErrorMsg("BAD_ANGLE", "integration must be positive"))
            return
        if not self._session_lock.acquire(blocking=False):
            requester.send(ErrorMsg("BUSY", "a session is already running"))
            return
        threading.Thread(
            target=self._run_session_locked, args=(requester, request), daemon=True
        ).start()

    def _run_session_locked(self, requester: Connection, request: RunChsh) -> None:
        try:
            self._execute_session(requester, request)
        finally:
            self._session_lock.release()

    def _await(self, slot: dict, what: str):
        if not slot["event"].wait(self.step_timeout_s):
            raise SessionFailed("TIMEOUT", f"no {what} within {self.step_timeout_s}s")
        return slot["message"]

    def _execute_session(self, requester: Connection, request: RunChsh) -> None:
        transcript = SessionTranscript()
        self.last_transcript = transcript
        session_id = request.session_id or str(uuid.uuid4())
        try:
            if not self.closet_ready():
                raise SessionFailed("NO_CLOSET", "remote motor not connected")
            settings = settings_from_user(request.a, request.a_prime)
            rng = self.engine.session_rng(settings, request.integration_s)
            t0 = self.engine.clock_s
            records = []
            steps = self.engine.measurement_steps(settings)
            for slot_index, signal_deg, idler_deg in steps:
                # both motors move concurrently; counting starts when the
                # second arm confirms
                rid_closet, closet_slot = self._new_request()
                msg = SetAngle("closet_waveplate", signal_deg, rid_closet)
                transcript.add("out", msg)
                if not self._closet.send(msg):
                    raise SessionFailed("NO_CLOSET", "send to remote motor failed")
                rid_local, local_slot = self._new_request()
                local_msg = SetAngle("source_lab", idler_deg, rid_local)
                transcript.add("out", local_msg)
                self._local_motor_async(local_msg)

                for rid, slot, arm in (
                    (rid_closet, closet_slot, "remote"),
                    (rid_local, local_slot, "local"),
                ):
                    reply = self._await(slot, f"ANGLE_SET from {arm} motor")
                    if not isinstance(reply, AngleSet):
                        raise SessionFailed("PROTOCOL", f"unexpected {type(reply).__name__}")
                    transcript.add("in", reply)

                rid_count, count_slot = self._new_request()
                start = StartCount(duration_s=request.integration_s, request_id=rid_count)
                transcript.add("out", start)
                self._tagger_async(start, signal_deg, idler_deg, rng)
                report = self._await(count_slot, "COUNT_REPORT")
                if not isinstance(report, CountReport):
                    raise SessionFailed("PROTOCOL", f"unexpected {type(report).__name__}")
                transcript.add("in", report)
                records.append(report.record)
                requester.send(Progress(session_id=session_id, step=slot_index + 1, of=16))

            records = tuple(
                dataclasses.replace(r, wall_time=r.wall_time - t0) for r in records
            )
            matrix = MeasurementMatrix(settings=settings, records=records)
            result = chsh_from_matrix(
                matrix, live=True, wall_time=self.engine.clock_s - t0
            )
            entry = ExperimentLogEntry.now(settings, records, result, live=True)
            append_log(self.log_path, entry)  # durable before acknowledgement
            requester.send(ChshResultMsg(session_id=session_id, result=result))
        except SessionFailed as failure:
            log.warning("session %s failed: %s", session_id, failure)
            requester.send(ErrorMsg(failure.code, failure.detail))
        except Exception as exc:  # never leave the requester hanging
            log.exception("session %s aborted", session_id)
            requester.send(ErrorMsg("INTERNAL", f"{type(exc).__name__}: {exc}"))

    def _local_motor_async(self, message: SetAngle) -> None:
        def run():
            actual = self.local_motor.move_to_analyzer(message.angle_deg)
            reply = AngleSet(request_id=message.request_id, actual_angle_deg=actual)
            self.inbox.put((None, reply))

        threading.Thread(target=run, daemon=True).start()

    def _tagger_async(self, start: StartCount, signal_deg, idler_deg, rng) -> None:
        def run():
            if self.time_scale > 0:
                time.sleep(start.duration_s * self.time_scale)
            record = self.engine.count_window(
                signal_deg, idler_deg, start.duration_s, rng
            )
            self.inbox.put((None, CountReport(request_id=start.request_id, record=record)))

        threading.Thread(target=run, daemon=True).start()


class GatewayClient:
    """Client side of a run request: used by the kiosk gateway and the CLI."""

    def __init__(self, host: str, port: int, token: str, timeout: float = 10.0):
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        self.inbox: queue.Queue = queue.Queue()
        self.conn = Connection(sock, self.inbox, "client->source")
        self.conn.send(
            Hello(role="kiosk_gateway", version=PROTOCOL_VERSION, token=token)
        )
        reply = self._next(timeout)
        if not isinstance(reply, Hello):
            raise ProtocolError("HANDSHAKE", f"expected HELLO, got {reply}")

    def _next(self, timeout: float) -> Message:
        try:
            conn, message = self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no reply from source node") from None
        if message is None:
            raise ConnectionError("source node closed the connection")
        return message

    def run_chsh(
        self,
        a_deg: float,
        a_prime_deg: float,
        integration_s: float,
        step_timeout_s: float = 60.0,
        on_progress=None,
    ):
        session_id = str(uuid.uuid4())
        self.conn.send(
            RunChsh(
                a=a_deg,
                a_prime=a_prime_deg,
                integration_s=integration_s,
                session_id=session_id,
            )
        )
        while True:
            message = self._next(step_timeout_s)
            if isinstance(message, Progress):
                if on_progress is not None:
                    on_progress(message)
            elif isinstance(message, ChshResultMsg):
                return message.result
            elif isinstance(message, ErrorMsg):
                raise SessionFailed(message.code, message.detail)
            # anything else (stray frames) is ignored

    def close(self) -> None:
        self.conn.close()
