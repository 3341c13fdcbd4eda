"""Kiosk gateway: analyzer-station streaming and the session API over HTTP.

The public touchscreen talks to this daemon only.  Endpoints:

* ``GET  /state``     - snapshot: phase, live reading, calibration, last result
* ``GET  /reference`` - the stored S-versus-delta sweep (the kiosk hint curve)
* ``GET  /events``    - server-sent events; payloads mirror the wire protocol
                        variants one-to-one (FRAME, PROGRESS, CHSH_RESULT,
                        ERROR, CALIBRATION)
* ``POST /wheel``     - move the simulated user wheel: {"angle_deg": float}
* ``POST /run``       - start a run: {"a": deg, "a_prime": deg,
                        "integration_s": optional}
* ``POST /calibrate`` - {"action": "reset"|"done"}
* ``GET  /``          - kiosk page, when a static directory is configured

When the source lab is unreachable the gateway answers runs from the
stored reference sweep instead, flagged ``live: false``; the UI shows the
replayed badge.  No physics is computed client-side: every displayed
number originates here.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..analyzer import AnalyzerStation
from ..fallback import default_sweep_table, fallback_result
from .config import AppConfig
from .logstore import ExperimentLogEntry, append_log
from .nodes import GatewayClient, SessionFailed

log = logging.getLogger(__name__)


class GatewayNode:
    """State shared between the HTTP handlers and the frame ticker."""

    def __init__(self, config: AppConfig, log_path: str | None = None):
        self.config = config
        self.station = AnalyzerStation(seed=config.channel.seed, start_calibrated=True)
        self.fallback_table = default_sweep_table(
            config.kiosk.fallback_visibility, config.kiosk.fallback_sigma
        )
        self.log_path = log_path
        self._subscribers: list[queue.Queue] = []
        self._subscribers_lock = threading.Lock()
        self._running = threading.Lock()
        self.phase = "idle"
        self.last_result: dict | None = None
        self._stop = threading.Event()
        self._server: ThreadingHTTPServer | None = None
        self.http_port = config.kiosk.http_port
        self.static_dir: str | None = None

    # -- events ------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=256)
        with self._subscribers_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._subscribers_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, payload: dict) -> None:
        with self._subscribers_lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(payload)
            except queue.Full:
                pass  # slow client; it will resync from /state

    # -- station -----------------------------------------------------------

    def frame_tick(self) -> None:
        frame = self.station.frame()
        payload = {"type": "FRAME", "frame": frame.to_dict()}
        reading = self.station.reading()
        if reading is not None:
            payload["reading"] = reading
        if self.station.calibrating:
            payload["calibration"] = self.calibration_state()
        self.publish(payload)

    def _ticker(self) -> None:
        interval = 1.0 / self.config.kiosk.frame_rate_hz
        while not self._stop.is_set():
            self.frame_tick()
            time.sleep(interval)

    def calibration_state(self) -> dict:
        return {
            "complete": self.station.calibration.is_complete(),
            "calibrating": self.station.calibrating,
            "coverage_deg": self.station.sweep_coverage_deg(),
        }

    def state(self) -> dict:
        return {
            "phase": self.phase,
            "wheel_angle_deg": self.station.wheel_deg,
            "reading": self.station.reading(),
            "calibration": self.calibration_state(),
            "last_result": self.last_result,
            "fallback_ready": bool(self.fallback_table),
        }

    # -- sessions ------------------------------------------------------------

    def start_run(self, a: float, a_prime: float, integration_s: float) -> dict:
        if not self._running.acquire(blocking=False):
            return {"error": "BUSY", "detail": "a run is already in progress"}
        self.phase = "running"
        threading.Thread(
            target=self._run_locked, args=(a, a_prime, integration_s), daemon=True
        ).start()
        return {"accepted": True}

    def _run_locked(self, a: float, a_prime: float, integration_s: float) -> None:
        try:
            self._run_session(a, a_prime, integration_s)
        finally:
            self.phase = "idle"
            self._running.release()

    def _run_session(self, a: float, a_prime: float, integration_s: float) -> None:
        nodes = self.config.nodes
        try:
            client = GatewayClient(
                nodes.source_host, nodes.source_port, nodes.token, timeout=3.0
            )
        except OSError as exc:
            log.warning("source lab unreachable (%s); replaying stored sweep", exc)
            self._run_fallback(a, a_prime)
            return
        try:
            result = client.run_chsh(
                a, a_prime, integration_s,
                step_timeout_s=nodes.step_timeout_s + integration_s + 30.0,
                on_progress=lambda p: self.publish(
                    {"type": "PROGRESS", "session_id": p.session_id,
                     "step": p.step, "of": p.of}
                ),
            )
        except SessionFailed as failure:
            self.publish({"type": "ERROR", "code": failure.code, "detail": failure.detail})
            return
        except (TimeoutError, ConnectionError, OSError) as exc:
            log.warning("live run failed (%s); replaying stored sweep", exc)
            self._run_fallback(a, a_prime)
            return
        finally:
            client.close()
        self.last_result = result.to_dict()
        self.publish({"type": "CHSH_RESULT", "session_id": "", "result": result.to_dict()})

    def _run_fallback(self, a: float, a_prime: float) -> None:
        try:
            result = fallback_result(a, a_prime, self.fallback_table)
        except Exception as exc:  # empty table
            self.publish({"type": "ERROR", "code": "UNAVAILABLE", "detail": str(exc)})
            return
        if self.log_path:
            entry = ExperimentLogEntry.now(result.settings, (), result, live=False)
            try:
                append_log(self.log_path, entry)
            except Exception:
                log.exception("could not persist fallback entry")
        self.last_result = result.to_dict()
        self.publish({"type": "CHSH_RESULT", "session_id": "", "result": result.to_dict()})

    # -- calibration ---------------------------------------------------------

    def calibrate(self, action: str) -> dict:
        if action == "reset":
            self.station.start_calibration()
            state = self.calibration_state()
            self.publish({"type": "CALIBRATE", "action": "reset"} | state)
            return state
        if action == "done":
            ok = self.station.finish_calibration()
            state = self.calibration_state()
            self.publish({"type": "CALIBRATE", "action": "done", "accepted": ok} | state)
            if not ok:
                return {"error": "INCOMPLETE_SWEEP"} | state
            return state
        return {"error": "BAD_ACTION", "detail": action}

    # -- server ---------------------------------------------------------------

    def start(self) -> None:
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer(
            (self.config.kiosk.http_host, self.http_port), handler
        )
        self.http_port = self._server.server_address[1]
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        threading.Thread(target=self._ticker, daemon=True).start()

    def stop(self) -> None:
        self._stop.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


def _make_handler(gateway: GatewayNode):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("http: " + fmt, *args)

        def _json(self, payload: dict, status: int = 200) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError:
                return {}

        def do_GET(self):
            if self.path == "/state":
                self._json(gateway.state())
            elif self.path == "/reference":
                self._json({"rows": gateway.fallback_table})
            elif self.path == "/events":
                self._serve_events()
            elif self.path == "/" and gateway.static_dir:
                self._serve_static("index.html")
            elif gateway.static_dir and "/.." not in self.path:
                self._serve_static(self.path.lstrip("/"))
            else:
                self._json({"error": "NOT_FOUND"}, status=404)

        def _serve_static(self, rel: str) -> None:
            path = os.path.join(gateway.static_dir, rel)
            if not os.path.isfile(path):
                self._json({"error": "NOT_FOUND"}, status=404)
                return
            ctype = {
                ".html": "text/html", ".js": "text/javascript",
                ".css": "text/css", ".map": "application/json",
            }.get(os.path.splitext(path)[1], "application/octet-stream")
            with open(path, "rb") as f:
                body = f.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _serve_events(self) -> None:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            q = gateway.subscribe()
            try:
                while True:
                    try:
                        payload = q.get(timeout=5.0)
                        data = json.dumps(payload)
                        self.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                    except queue.Empty:
                        self.wfile.write(b": keep-alive\n\n")
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                gateway.unsubscribe(q)

        def do_POST(self):
            body = self._body()
            if self.path == "/wheel":
                angle = body.get("angle_deg")
                if not isinstance(angle, (int, float)):
                    self._json({"error": "BAD_ANGLE"}, status=400)
                    return
                gateway.station.set_wheel(float(angle))
                self._json({"wheel_angle_deg": gateway.station.wheel_deg})
            elif self.path == "/run":
                a, a_prime = body.get("a"), body.get("a_prime")
                if not all(isinstance(x, (int, float)) for x in (a, a_prime)):
                    self._json({"error": "BAD_ANGLE"}, status=400)
                    return
                integration = body.get(
                    "integration_s", gateway.config.nodes.integration_default_s
                )
                outcome = gateway.start_run(float(a), float(a_prime), float(integration))
                self._json(outcome, status=409 if outcome.get("error") == "BUSY" else 200)
            elif self.path == "/calibrate":
                outcome = gateway.calibrate(str(body.get("action", "")))
                has_error = "error" in outcome
                self._json(outcome, status=409 if has_error else 200)
            else:
                self._json({"error": "NOT_FOUND"}, status=404)

    return Handler
