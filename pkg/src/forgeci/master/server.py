"""Network frontends for the master: the agent TCP listener (newline-JSON
protocol), the HTTP API/webhook endpoint, live console streaming, badges,
and static dashboard assets.

All scheduler mutations funnel into MasterCore, which serializes them; the
threads here only move bytes.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import re
import socket
import threading
import time
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .. import protocol
from ..protocol import (
    AgentHello,
    ChunkTracker,
    FrameReader,
    Kind,
    ProtocolError,
    SequenceSource,
    SequenceTracker,
    WireMessage,
    chunk_payload,
    encode,
    validate_hello,
)
from ..status import FileStatusClient
from .config import ConfigInvalid, MasterConfig
from .core import (
    BadSha,
    MalformedPayload,
    MasterCore,
    NoSuchJob,
    NotManuallyTriggerable,
    NotRunning,
    UnknownBuild,
    WebhookEvent,
)
from .store import DiskStore, build_to_dict

CONSOLE_POLL = 0.05

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def webhook_signature(secret: str, body: bytes) -> str:
    return hmac.new(secret.encode("utf-8"), body, hashlib.sha256).hexdigest()


class AgentConnection:
    def __init__(self, name: str, platform: str, sock: socket.socket) -> None:
        self.name = name
        self.platform = platform
        self.sock = sock
        self.seq_out = SequenceSource()
        self.send_lock = threading.Lock()

    def send(self, kind: Kind, body: Optional[dict] = None) -> None:
        with self.send_lock:
            self.sock.sendall(encode(WireMessage(kind, self.seq_out.take(), body or {})))

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class MasterService:
    """Owns the core plus every listener thread. start() binds the ports
    (0 picks ephemeral ones), stop() tears everything down."""

    def __init__(
        self,
        config: MasterConfig,
        config_path: Optional[str] = None,
        store=None,
        status_client=None,
        notify=None,
        pump_interval: float = 0.2,
    ) -> None:
        os.makedirs(config.data_dir, exist_ok=True)
        self.store = store or DiskStore(config.data_dir)
        status_client = status_client or FileStatusClient(
            os.path.join(config.data_dir, "statuses.jsonl")
        )
        self.notify_path = os.path.join(config.data_dir, "notifications.log")
        self.core = MasterCore(
            config,
            self.store,
            status_client=status_client,
            notify=notify or self._notify_to_file,
            config_path=config_path,
        )
        self.pump_interval = pump_interval
        self._conns: dict[str, AgentConnection] = {}
        self._conns_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._agent_sock: Optional[socket.socket] = None
        self._httpd: Optional[ThreadingHTTPServer] = None

    def _notify_to_file(self, build, message: str) -> None:
        with open(self.notify_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"at": time.time(), "message": message}) + "\n")

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        config = self.core.config
        self._agent_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._agent_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._agent_sock.bind(("0.0.0.0", config.agent_port))
        self._agent_sock.listen(16)

        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer(("0.0.0.0", config.port), handler)
        self._httpd.daemon_threads = True

        for target, name in (
            (self._accept_loop, "agent-accept"),
            (self._httpd.serve_forever, "http"),
            (self._timer_loop, "timer"),
        ):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._stop.set()
        if self._httpd:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._agent_sock:
            try:
                self._agent_sock.close()
            except OSError:
                pass
        with self._conns_lock:
            for conn in list(self._conns.values()):
                conn.close()
            self._conns.clear()

    @property
    def http_port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def agent_port(self) -> int:
        return self._agent_sock.getsockname()[1]

    # --- scheduling pump -------------------------------------------------------

    def pump(self) -> None:
        """Push every dispatchable build to its agent."""
        for agent_name, assignment in self.core.dispatch():
            with self._conns_lock:
                conn = self._conns.get(agent_name)
            if conn is None:
                # registration raced away; requeue by failing fast
                self._drop_agent(agent_name)
                continue
            try:
                conn.send(Kind.ASSIGN, assignment.to_body())
            except OSError:
                self._drop_agent(agent_name)

    def _drop_agent(self, name: str) -> None:
        with self._conns_lock:
            conn = self._conns.pop(name, None)
        if conn:
            conn.close()
        self.core.deregister_agent(name)

    def _timer_loop(self) -> None:
        while not self._stop.wait(self.pump_interval):
            for name in self.core.check_liveness():
                with self._conns_lock:
                    conn = self._conns.pop(name, None)
                if conn:
                    conn.close()
            try:
                self.core.maintenance_reload()
            except ConfigInvalid:
                pass  # old config stays active
            self.pump()

    # --- agent protocol side ----------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _addr = self._agent_sock.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_agent, args=(sock,), daemon=True)
            thread.start()

    def _serve_agent(self, sock: socket.socket) -> None:
        reader = FrameReader()
        tracker = SequenceTracker()
        chunks = ChunkTracker()
        seq_out = SequenceSource()
        conn: Optional[AgentConnection] = None
        try:
            while not self._stop.is_set():
                data = sock.recv(65536)
                if not data:
                    break
                for msg in reader.feed(data):
                    tracker.check(msg.seq)
                    if conn is None:
                        if msg.kind is not Kind.HELLO:
                            sock.sendall(
                                encode(protocol.error_message(seq_out.take(), "ExpectedHello"))
                            )
                            return
                        hello = AgentHello.from_body(msg.body)
                        try:
                            validate_hello(hello, self.core.config.platforms)
                        except ProtocolError as exc:
                            sock.sendall(
                                encode(
                                    protocol.error_message(
                                        seq_out.take(), type(exc).__name__, str(exc)
                                    )
                                )
                            )
                            return
                        conn = AgentConnection(hello.agent_name, hello.platform, sock)
                        conn.seq_out = seq_out
                        # registration and connection-map insert are atomic so
                        # a concurrent pump cannot see one without the other
                        with self._conns_lock:
                            superseded = self.core.register_agent(
                                hello.agent_name, hello.platform
                            )
                            stale = self._conns.pop(hello.agent_name, None)
                            for other in superseded:
                                displaced = self._conns.pop(other, None)
                                if displaced:
                                    displaced.close()
                            self._conns[hello.agent_name] = conn
                        if stale is not None and stale.sock is not sock:
                            stale.close()
                        conn.send(Kind.HELLO_ACK, {"heartbeat_interval": protocol.HEARTBEAT_INTERVAL})
                        self.pump()
                        continue

                    self.core.heartbeat(conn.name)
                    if msg.kind is Kind.HEARTBEAT or msg.kind is Kind.ACCEPT:
                        pass
                    elif msg.kind is Kind.LOG_CHUNK:
                        build_id, chunk_index, payload = chunk_payload(msg)
                        chunks.check(build_id, chunk_index)
                        try:
                            self.core.append_log(build_id, payload)
                        except UnknownBuild:
                            pass
                    elif msg.kind is Kind.RESULT:
                        try:
                            build_id = int(msg.body["build_id"])
                            exit_code = int(msg.body["exit_code"])
                            log_complete = bool(msg.body.get("log_complete", True))
                        except (KeyError, TypeError, ValueError) as exc:
                            raise ProtocolError(f"bad RESULT body: {exc}") from exc
                        try:
                            self.core.record_result(build_id, exit_code, log_complete)
                        except (UnknownBuild, NotRunning):
                            pass  # stale result for a superseded/lost registration
                        self.core.prune_retention()
                        self.pump()
        except (OSError, ProtocolError):
            pass
        finally:
            if conn is not None:
                with self._conns_lock:
                    current = self._conns.get(conn.name)
                    if current is conn:
                        del self._conns[conn.name]
                        self.core.deregister_agent(conn.name)
            try:
                sock.close()
            except OSError:
                pass


# --- HTTP side ---------------------------------------------------------------


def _make_handler(service: MasterService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- helpers ---------------------------------------------------------

        def _json(self, payload, status: int = 200) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, name: str, detail: str, status: int) -> None:
            self._json({"error": name, "detail": detail}, status=status)

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", "0"))
            return self.rfile.read(length) if length else b""

        def _write_chunk(self, data: bytes) -> None:
            self.wfile.write(f"{len(data):X}\r\n".encode("ascii"))
            self.wfile.write(data)
            self.wfile.write(b"\r\n")

        # -- POST --------------------------------------------------------------

        def do_POST(self) -> None:
            path = urllib.parse.urlparse(self.path).path
            try:
                if path == "/webhook":
                    self._post_webhook()
                    return
                m = re.match(r"^/api/jobs/([^/]+)/trigger$", path)
                if m:
                    self._post_trigger(urllib.parse.unquote(m.group(1)))
                    return
                self._error("NotFound", path, 404)
            except BrokenPipeError:
                pass

        def _post_webhook(self) -> None:
            body = self._read_body()
            secret = service.core.config.secret
            if secret:
                signature = self.headers.get("X-Signature", "")
                expected = webhook_signature(secret, body)
                if not hmac.compare_digest(signature, expected):
                    self._error("BadSignature", "HMAC verification failed", 403)
                    return
            kind = self.headers.get("X-Event-Kind", "")
            delivery = self.headers.get("X-Delivery-Id", "")
            try:
                payload = json.loads(body.decode("utf-8"))
                event = WebhookEvent.from_payload(kind, delivery, payload)
            except (ValueError, MalformedPayload) as exc:
                self._error("MalformedPayload", str(exc), 400)
                return
            result = service.core.ingest_webhook(event)
            service.pump()
            if hasattr(result, "reason"):
                self._json({"accepted": False, "reason": result.reason})
            else:
                self._json(
                    {"accepted": True, "event_id": result.event_id, "builds": list(result.builds)}
                )

        def _post_trigger(self, job_name: str) -> None:
            try:
                payload = json.loads(self._read_body().decode("utf-8") or "{}")
            except ValueError as exc:
                self._error("MalformedPayload", str(exc), 400)
                return
            actor = str(payload.get("actor", "")) or self.headers.get("X-Admin-User", "")
            try:
                group = service.core.manual_trigger(job_name, str(payload.get("sha", "")), actor)
            except NoSuchJob as exc:
                self._error("NoSuchJob", str(exc), 404)
                return
            except NotManuallyTriggerable as exc:
                self._error("NotManuallyTriggerable", str(exc), 400)
                return
            except BadSha as exc:
                self._error("BadSha", str(exc), 400)
                return
            service.pump()
            self._json(
                {"event_id": group.event_id, "sha": group.commit.sha, "builds": list(group.builds)}
            )

        # -- GET ----------------------------------------------------------------

        def do_GET(self) -> None:
            parsed = urllib.parse.urlparse(self.path)
            path = parsed.path
            query = urllib.parse.parse_qs(parsed.query)
            try:
                self._route_get(path, query)
            except BrokenPipeError:
                pass

        def _route_get(self, path: str, query: dict) -> None:
            if path == "/":
                self._json({"service": "forgeci-master", "ui": "/ui/"})
                return
            m = re.match(r"^/api/builds/(\d+)$", path)
            if m:
                try:
                    build = service.core.get_build(int(m.group(1)))
                except UnknownBuild as exc:
                    self._error("UnknownBuild", str(exc), 404)
                    return
                self._json(build_to_dict(build))
                return
            if path == "/api/jobs":
                jobs = [
                    {
                        "name": j.name,
                        "trigger": j.trigger.value,
                        "platform": j.platform,
                        "versions": list(j.versions),
                        "manual": j.trigger.is_manual,
                    }
                    for j in service.core.config.jobs
                ]
                self._json({"jobs": jobs})
                return
            m = re.match(r"^/api/jobs/([^/]+)/trend$", path)
            if m:
                try:
                    trend = service.core.build_time_trend(urllib.parse.unquote(m.group(1)))
                except NoSuchJob as exc:
                    self._error("NoSuchJob", str(exc), 404)
                    return
                self._json(trend.to_dict())
                return
            m = re.match(r"^/api/status/([0-9a-fA-F]{7,40})$", path)
            if m:
                try:
                    sha = service.core.resolve_sha(m.group(1))
                except BadSha as exc:
                    self._error("BadSha", str(exc), 400)
                    return
                self._json(service.core.status_matrix(sha).to_dict())
                return
            m = re.match(r"^/api/groups/([0-9a-f]+)$", path)
            if m:
                group = service.core.group_for_event(m.group(1))
                if group is None:
                    self._error("UnknownGroup", m.group(1), 404)
                    return
                builds = [build_to_dict(service.core.get_build(b)) for b in group.builds]
                self._json(
                    {
                        "event_id": group.event_id,
                        "cause": group.cause.value,
                        "sha": group.commit.sha,
                        "builds": builds,
                    }
                )
                return
            m = re.match(r"^/badges/([^/]+)\.svg$", path)
            if m:
                badge = service.core.badge(urllib.parse.unquote(m.group(1)))
                self.send_response(200)
                self.send_header("Content-Type", "image/svg+xml")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Content-Length", str(len(badge.svg)))
                self.end_headers()
                self.wfile.write(badge.svg)
                return
            m = re.match(r"^/job/([^/]+)/(\d+)/([^/]+)/([^/]+)/console$", path)
            if m:
                self._stream_console(
                    urllib.parse.unquote(m.group(1)),
                    int(m.group(2)),
                    urllib.parse.unquote(m.group(3)),
                    urllib.parse.unquote(m.group(4)),
                    int(query.get("offset", ["0"])[0]),
                )
                return
            if path.startswith("/ui"):
                self._serve_ui(path)
                return
            self._error("NotFound", path, 404)

        def _stream_console(
            self, job_name: str, build_id: int, version: str, platform: str, offset: int
        ) -> None:
            try:
                build = service.core.get_build(build_id)
            except UnknownBuild as exc:
                self._error("UnknownBuild", str(exc), 404)
                return
            if (build.job_name, build.version, build.platform) != (job_name, version, platform):
                self._error("UnknownBuild", "console coordinates do not match the build", 404)
                return

            self.send_response(200)
            self.send_header("Content-Type", "text/plain; charset=utf-8")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("X-Build-State", build.state.value)
            self.send_header("Transfer-Encoding", "chunked")
            self.end_headers()

            log_ref = build.log_ref
            while True:
                data = service.store.read_log(log_ref, offset)
                if data:
                    offset += len(data)
                    self._write_chunk(data)
                    continue
                build = service.core.get_build(build_id)
                if build.state.terminal:
                    tail = service.store.read_log(log_ref, offset)
                    if tail:
                        offset += len(tail)
                        self._write_chunk(tail)
                    break
                time.sleep(CONSOLE_POLL)
            self.wfile.write(b"0\r\n\r\n")

        def _serve_ui(self, path: str) -> None:
            root = service.core.config.ui_dir
            if not root or not os.path.isdir(root):
                self._error("NotFound", "no dashboard assets configured", 404)
                return
            rel = path[len("/ui") :].lstrip("/") or "index.html"
            full = os.path.realpath(os.path.join(root, rel))
            if not full.startswith(os.path.realpath(root) + os.sep) and full != os.path.realpath(
                os.path.join(root, "index.html")
            ):
                self._error("NotFound", "outside ui root", 404)
                return
            if os.path.isdir(full):
                full = os.path.join(full, "index.html")
            if not os.path.isfile(full):
                self._error("NotFound", rel, 404)
                return
            ext = os.path.splitext(full)[1].lower()
            content_type = _CONTENT_TYPES.get(ext, "application/octet-stream")
            with open(full, "rb") as fh:
                body = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler
