"""HTTP face of the control server.

Handlers never touch core state directly.  A Runtime owns the network
and the ControlCore, advances virtual time on one driver thread, and
executes submitted closures between advances - many submitters, one
executor.  An HTTP handler therefore only ever sees immutable snapshots
(dicts, dataclass copies) produced inside the driver.

Routes:

    GET    /rooms                     registry listing
    GET    /rooms/{id}/status         latest status; 404 unknown, 204 no data yet
    POST   /rooms/{id}/command        {"opcode": "LOCK"|...}; 200 OK,
                                      409 REFUSED_OCCUPIED, 504 timeout/unreachable,
                                      400 bad opcode
    GET    /events?since=N            ordered events, long-poll
    POST   /admin/rooms               201; 409 duplicate
    PUT    /admin/rooms/{id}          200; 404; 409 session conflict
    DELETE /admin/rooms/{id}          204; 404
    POST   /admin/sweep               run a sweep now, return its report

Anything under an optional static root is served read-only for the
operator console bundle.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ..devices import CommandStatus, Opcode
from .core import (
    ControlCore,
    ControlError,
    DuplicateRoom,
    NoDataYet,
    RegistryEntry,
    SessionDown,
    UnknownRoom,
)

_LONG_POLL_CAP_S = 30.0


class Runtime:
    """Single-driver executor around a network and its control core.

    `rate` is virtual ms per real second (1000 = real time); fast mode
    ignores pacing and burns through events as quickly as possible.
    """

    def __init__(self, network, core: ControlCore, rate: float = 1000.0, fast: bool = False) -> None:
        self.network = network
        self.core = core
        self.rate = rate
        self.fast = fast
        self._inbox: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- submission --------------------------------------------------------
    def submit(self, fn, timeout: float = 30.0):
        """Run fn(now) on the driver thread; return its result."""
        done = threading.Event()
        box: dict = {}

        def job(now: int) -> None:
            try:
                box["value"] = fn(now)
            except BaseException as exc:  # propagated to the submitter
                box["error"] = exc
            finally:
                done.set()

        self._inbox.put(job)
        if not done.wait(timeout):
            raise TimeoutError("runtime did not execute the submission in time")
        if "error" in box:
            raise box["error"]
        return box.get("value")

    def _drain(self) -> None:
        while True:
            try:
                job = self._inbox.get_nowait()
            except queue.Empty:
                return
            job(self.network.now)

    # -- driving -----------------------------------------------------------
    def run(self) -> None:
        start_wall = time.monotonic()
        origin = self.network.now
        while not self._stop.is_set():
            self._drain()
            if self.fast:
                nxt = self.network.next_event_at()
                if nxt is None:
                    time.sleep(0.001)
                    continue
                self.network.run_until(min(nxt, self.network.now + 1000))
            else:
                target = origin + int((time.monotonic() - start_wall) * self.rate)
                if target > self.network.now:
                    self.network.run_until(target)
                time.sleep(0.01)
        self._drain()

    def start(self) -> None:
        self._thread = threading.Thread(target=self.run, name="tunnelguard-driver", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


def _entry_to_dict(entry: RegistryEntry) -> dict:
    return {
        "room_id": entry.room_id,
        "node": entry.node,
        "port": entry.port,
        "session_id": entry.session_id,
        "device_port": entry.device_port,
    }


def _entry_from_dict(body: dict, room_id: int | None = None) -> RegistryEntry:
    try:
        return RegistryEntry(
            room_id=int(body["room_id"] if room_id is None else room_id),
            node=str(body["node"]),
            port=int(body.get("port", 0)),
            session_id=int(body["session_id"]),
            device_port=int(body["device_port"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise _BadRequest(f"bad registry entry: {exc}") from None


class _BadRequest(Exception):
    pass


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "tunnelguard"

    # set by make_api_server
    runtime: Runtime = None  # type: ignore[assignment]
    static_root: Path | None = None

    # -- plumbing -----------------------------------------------------------
    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        pass

    def _json(self, code: int, payload: dict | list) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        try:
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _empty(self, code: int) -> None:
        try:
            self.send_response(code)
            self.send_header("Content-Length", "0")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise _BadRequest(f"body is not valid JSON: {exc}") from None
        if not isinstance(parsed, dict):
            raise _BadRequest("body must be a JSON object")
        return parsed

    # -- routing ------------------------------------------------------------
    def do_OPTIONS(self) -> None:  # CORS preflight for dev setups
        try:
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_GET(self) -> None:
        self._route("GET")

    def do_POST(self) -> None:
        self._route("POST")

    def do_PUT(self) -> None:
        self._route("PUT")

    def do_DELETE(self) -> None:
        self._route("DELETE")

    def _route(self, method: str) -> None:
        url = urlparse(self.path)
        path = url.path
        try:
            if method == "GET" and path == "/rooms":
                return self._get_rooms()
            m = re.fullmatch(r"/rooms/(\d+)/status", path)
            if method == "GET" and m:
                return self._get_status(int(m.group(1)))
            m = re.fullmatch(r"/rooms/(\d+)/command", path)
            if method == "POST" and m:
                return self._post_command(int(m.group(1)))
            if method == "GET" and path == "/events":
                return self._get_events(parse_qs(url.query))
            if method == "POST" and path == "/admin/rooms":
                return self._post_admin_room()
            m = re.fullmatch(r"/admin/rooms/(\d+)", path)
            if method == "PUT" and m:
                return self._put_admin_room(int(m.group(1)))
            if method == "DELETE" and m:
                return self._delete_admin_room(int(m.group(1)))
            if method == "POST" and path == "/admin/sweep":
                return self._post_sweep()
            if method == "GET":
                return self._get_static(path)
            self._json(404, {"error": "no such route"})
        except _BadRequest as exc:
            self._json(400, {"error": str(exc)})
        except TimeoutError:
            self._json(504, {"status": "TIMEOUT", "error": "runtime stalled"})

    # -- handlers -------------------------------------------------------------
    def _get_rooms(self) -> None:
        entries = self.runtime.submit(lambda now: self.runtime.core.list_rooms())
        self._json(200, {"rooms": [_entry_to_dict(e) for e in entries]})

    def _get_status(self, room_id: int) -> None:
        def fetch(now: int):
            return self.runtime.core.get_status(now, room_id)

        try:
            status = self.runtime.submit(fetch)
        except UnknownRoom:
            return self._json(404, {"error": f"room {room_id} not registered"})
        except NoDataYet:
            return self._empty(204)
        self._json(200, status.to_dict())

    def _post_command(self, room_id: int) -> None:
        body = self._body()
        name = body.get("opcode")
        if not isinstance(name, str) or name.upper() not in Opcode.__members__:
            raise _BadRequest(f"opcode must be one of {sorted(Opcode.__members__)}")
        opcode = Opcode[name.upper()]

        settled = threading.Event()
        box: dict = {}

        def on_done(now: int, result) -> None:
            box["result"] = result
            settled.set()

        def send(now: int):
            return self.runtime.core.send_command(now, room_id, opcode, origin="api", on_done=on_done)

        try:
            request_id = self.runtime.submit(send)
        except UnknownRoom:
            return self._json(404, {"error": f"room {room_id} not registered"})
        except SessionDown:
            return self._json(504, {"status": "SESSION_DOWN"})

        # worst case is timeout + one retry; wait generously in real time
        # since virtual pacing decides how long that takes on the wire.
        budget = max(10.0, 3.0 * self.runtime.core.rules.command_timeout_ms *
                     (self.runtime.core.rules.command_retries + 1) / max(self.runtime.rate, 1e-9))
        if not settled.wait(min(budget, 120.0)):
            return self._json(504, {"status": "TIMEOUT", "request_id": request_id})
        result = box.get("result")
        if result is None:
            return self._json(504, {"status": "TIMEOUT", "request_id": request_id})
        status = CommandStatus(result.status)
        payload = {
            "status": status.name,
            "request_id": request_id,
            "servo_angle": result.servo_angle,
            "appliance_on": result.appliance_on,
        }
        if status is CommandStatus.OK:
            return self._json(200, payload)
        if status is CommandStatus.REFUSED_OCCUPIED:
            return self._json(409, payload)
        return self._json(400, payload)

    def _get_events(self, query: dict) -> None:
        try:
            since = int(query.get("since", ["0"])[0])
            wait_ms = int(query.get("timeout_ms", ["25000"])[0])
        except ValueError:
            raise _BadRequest("since and timeout_ms must be integers") from None
        deadline = time.monotonic() + min(max(wait_ms, 0) / 1000.0, _LONG_POLL_CAP_S)
        while True:
            events = self.runtime.submit(lambda now: self.runtime.core.events_since(since))
            if events or time.monotonic() >= deadline:
                return self._json(200, {"events": [e.to_dict() for e in events]})
            time.sleep(0.1)

    def _post_admin_room(self) -> None:
        entry = _entry_from_dict(self._body())
        try:
            self.runtime.submit(lambda now: self.runtime.core.add_room(now, entry))
        except DuplicateRoom as exc:
            return self._json(409, {"error": str(exc)})
        self._json(201, _entry_to_dict(entry))

    def _put_admin_room(self, room_id: int) -> None:
        body = self._body()
        fields = {}
        for key in ("node", "port", "session_id", "device_port"):
            if key in body:
                fields[key] = str(body[key]) if key == "node" else int(body[key])
        try:
            updated = self.runtime.submit(lambda now: self.runtime.core.update_room(now, room_id, **fields))
        except UnknownRoom:
            return self._json(404, {"error": f"room {room_id} not registered"})
        except DuplicateRoom as exc:
            return self._json(409, {"error": str(exc)})
        self._json(200, _entry_to_dict(updated))

    def _delete_admin_room(self, room_id: int) -> None:
        try:
            self.runtime.submit(lambda now: self.runtime.core.delete_room(now, room_id))
        except UnknownRoom:
            return self._json(404, {"error": f"room {room_id} not registered"})
        self._empty(204)

    def _post_sweep(self) -> None:
        settled = threading.Event()
        box: dict = {}

        def start(now: int):
            return self.runtime.core.start_sweep(
                now, reason="manual", on_finished=lambda report: (box.update(report=report), settled.set())
            )

        try:
            self.runtime.submit(start)
        except ControlError as exc:
            return self._json(409, {"error": str(exc)})
        if not settled.wait(120.0):
            return self._json(504, {"status": "TIMEOUT", "error": "sweep did not finish"})
        self._json(200, box["report"].to_dict())

    # -- static bundle ----------------------------------------------------------
    def _get_static(self, path: str) -> None:
        root = self.static_root
        if root is None:
            return self._json(404, {"error": "no such route"})
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            return self._json(404, {"error": "no such file"})
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        data = target.read_bytes()
        try:
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass


class ApiServer:
    def __init__(self, runtime: Runtime, host: str = "127.0.0.1", port: int = 8080,
                 static_root: str | Path | None = None) -> None:
        handler = type("BoundHandler", (_Handler,), {
            "runtime": runtime,
            "static_root": Path(static_root) if static_root else None,
        })
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="tunnelguard-api", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
