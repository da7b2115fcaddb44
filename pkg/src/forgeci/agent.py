"""Agent-side build execution: workspace setup, detached script execution
with output routed to ``output.log``, live file-follow streaming, exit-code
propagation, and workspace cleanup.

The log is never read from a pipe: the child writes to a file and a poller
follows it, on every platform alike, stopping only once the child is dead
and two consecutive polls found no new bytes. That post-exit drain is what
guarantees streamed bytes equal the final file byte-for-byte even when the
writer exits immediately after its last write.
"""

from __future__ import annotations

import os
import shutil
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Protocol

from . import protocol
from .protocol import (
    AgentHello,
    Assignment,
    FrameReader,
    Kind,
    SequenceSource,
    SequenceTracker,
    WireMessage,
    encode,
    log_chunk,
    split_chunks,
)

LOG_FILE_NAME = "output.log"
DEFAULT_POLL_INTERVAL = 0.05
DEFAULT_CREATE_GRACE = 5.0


class AgentError(RuntimeError):
    pass


class FetchFailed(AgentError):
    pass


class SpawnFailed(AgentError):
    pass


class WorkspaceCleanupFailed(AgentError):
    pass


class FileVanished(AgentError):
    pass


class ProcessHandle(Protocol):
    """The liveness/exit view the follower needs; satisfied by a real child
    process or a test double."""

    def is_alive(self) -> bool:
        ...

    def exit_code(self) -> Optional[int]:
        ...


class PopenHandle:
    def __init__(self, proc: subprocess.Popen) -> None:
        self.proc = proc

    def is_alive(self) -> bool:
        return self.proc.poll() is None

    def exit_code(self) -> Optional[int]:
        return self.proc.poll()


def follow_log(
    path: str,
    handle: ProcessHandle,
    poll_interval: float = DEFAULT_POLL_INTERVAL,
    create_grace: float = DEFAULT_CREATE_GRACE,
) -> Iterator[bytes]:
    """Yield appended byte runs of ``path`` in order while the process lives.

    Terminates only after the process has exited AND two consecutive polls
    after that saw end-of-file, so a final write racing the exit is still
    delivered. Raises FileVanished when the file never appears within the
    grace window or disappears/truncates mid-follow.
    """
    deadline = time.monotonic() + create_grace
    while not os.path.exists(path):
        if time.monotonic() > deadline:
            raise FileVanished(f"{path} was not created within {create_grace}s")
        time.sleep(poll_interval)

    offset = 0
    empty_after_exit = 0
    while True:
        try:
            size = os.path.getsize(path)
        except OSError as exc:
            raise FileVanished(f"{path} disappeared mid-follow") from exc
        if size < offset:
            raise FileVanished(f"{path} shrank from {offset} to {size}")
        if size > offset:
            with open(path, "rb") as fh:
                fh.seek(offset)
                data = fh.read(size - offset)
            offset += len(data)
            empty_after_exit = 0
            yield data
            continue
        if not handle.is_alive():
            empty_after_exit += 1
            if empty_after_exit >= 2:
                return
        time.sleep(poll_interval)


# A fetcher materializes the commit into the workspace root. Production use
# plugs in a VCS checkout; tests copy a local directory.
Fetcher = Callable[[Assignment, str], None]


def local_dir_fetcher(source_root: str) -> Fetcher:
    def fetch(assignment: Assignment, workspace: str) -> None:
        if not os.path.isdir(source_root):
            raise FetchFailed(f"source directory {source_root!r} does not exist")
        shutil.copytree(source_root, workspace, dirs_exist_ok=True)

    return fetch


def empty_fetcher(assignment: Assignment, workspace: str) -> None:
    os.makedirs(workspace, exist_ok=True)


@dataclass
class BuildOutcome:
    exit_code: int
    log_path: str
    streamed: bytes
    cleanup_error: Optional[WorkspaceCleanupFailed] = None
    follow_error: Optional[str] = None


def run_build(
    assignment: Assignment,
    fetcher: Fetcher,
    workspace_root: str,
    on_chunk: Optional[Callable[[bytes], None]] = None,
    extra_env: Optional[dict[str, str]] = None,
    unset_vars: tuple[str, ...] = (),
    poll_interval: float = DEFAULT_POLL_INTERVAL,
    on_spawn: Optional[Callable[[subprocess.Popen], None]] = None,
) -> BuildOutcome:
    """Execute one assignment: fetch the workspace, drop the command script
    in it, run it detached with all output routed to ``output.log``, stream
    that file live, and report the child's real exit status.

    Cleanup failures are reported in the outcome but never change the exit
    code; a vanished log file marks the build failed.
    """
    workspace = os.path.join(workspace_root, f"build-{assignment.build_id}")
    if os.path.exists(workspace):
        shutil.rmtree(workspace)
    os.makedirs(workspace)

    try:
        outcome = _execute(
            assignment, fetcher, workspace,
            on_chunk=on_chunk, extra_env=extra_env, unset_vars=unset_vars,
            poll_interval=poll_interval, on_spawn=on_spawn,
        )
    except BaseException:
        if assignment.workspace_policy == "clean_after":
            _remove_workspace(workspace)
        raise
    if assignment.workspace_policy == "clean_after":
        outcome.cleanup_error = _remove_workspace(workspace)
    return outcome


def _execute(
    assignment: Assignment,
    fetcher: Fetcher,
    workspace: str,
    on_chunk: Optional[Callable[[bytes], None]],
    extra_env: Optional[dict[str, str]],
    unset_vars: tuple[str, ...],
    poll_interval: float,
    on_spawn: Optional[Callable[[subprocess.Popen], None]] = None,
) -> BuildOutcome:
    try:
        fetcher(assignment, workspace)
    except FetchFailed:
        raise
    except Exception as exc:
        raise FetchFailed(str(exc)) from exc

    script_path = os.path.join(workspace, assignment.script_name)
    with open(script_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(assignment.script_text)
    os.chmod(script_path, 0o755)

    env = dict(os.environ)
    for name in unset_vars:
        env.pop(name, None)
    env.update(extra_env or {})
    env.update(dict(assignment.bindings))

    log_path = os.path.join(workspace, LOG_FILE_NAME)
    log_fh = open(log_path, "wb")
    try:
        try:
            proc = subprocess.Popen(
                [script_path],
                cwd=workspace,
                stdout=log_fh,
                stderr=subprocess.STDOUT,
                stdin=subprocess.DEVNULL,
                env=env,
                start_new_session=True,  # detached, the & analog
            )
        except OSError as exc:
            raise SpawnFailed(str(exc)) from exc
    finally:
        log_fh.close()

    if on_spawn:
        on_spawn(proc)
    handle = PopenHandle(proc)
    streamed = bytearray()
    follow_error: list[str] = []

    def pump() -> None:
        try:
            for chunk in follow_log(log_path, handle, poll_interval=poll_interval):
                streamed.extend(chunk)
                if on_chunk:
                    on_chunk(chunk)
        except FileVanished as exc:
            follow_error.append(str(exc))

    follower = threading.Thread(target=pump, name=f"follow-{assignment.build_id}")
    follower.start()
    exit_code = proc.wait()
    follower.join()

    error = follow_error[0] if follow_error else None
    if error and exit_code == 0:
        exit_code = 1  # lost log output means the build cannot count as good
    return BuildOutcome(
        exit_code=exit_code,
        log_path=log_path,
        streamed=bytes(streamed),
        follow_error=error,
    )


def _remove_workspace(workspace: str) -> Optional[WorkspaceCleanupFailed]:
    try:
        shutil.rmtree(workspace, ignore_errors=False)
        return None
    except OSError as exc:
        return WorkspaceCleanupFailed(str(exc))


@dataclass
class AgentConfig:
    master_host: str
    master_port: int
    agent_name: str
    platform: str
    workspace_root: str
    installdir: str = ""
    fetch_root: str = ""
    unset_vars: tuple[str, ...] = ()
    heartbeat_interval: float = protocol.HEARTBEAT_INTERVAL
    poll_interval: float = DEFAULT_POLL_INTERVAL
    cores: int = 1
    memory_mb: int = 0


def load_agent_config(path: str) -> AgentConfig:
    """Agent config file, in the same block dialect as the pipeline file."""
    from .pipeline import parse_document

    with open(path, "r", encoding="utf-8") as fh:
        entries = parse_document(fh.read())

    def scalar(key: str, default: Optional[str] = None) -> str:
        value = entries.get(key, default)
        if value is None:
            raise AgentError(f"agent config is missing {key!r}")
        if isinstance(value, list):
            raise AgentError(f"agent config key {key!r} must be a scalar")
        return value

    unset = entries.get("unset_vars", [])
    return AgentConfig(
        master_host=scalar("master_host", "127.0.0.1"),
        master_port=int(scalar("master_port", str(protocol.DEFAULT_AGENT_PORT))),
        agent_name=scalar("agent_name"),
        platform=scalar("platform"),
        workspace_root=scalar("workspace"),
        installdir=scalar("installdir", ""),
        fetch_root=scalar("fetch_root", ""),
        unset_vars=tuple(unset) if isinstance(unset, list) else (),
        heartbeat_interval=float(scalar("heartbeat_interval", str(protocol.HEARTBEAT_INTERVAL))),
        poll_interval=float(scalar("poll_interval", str(DEFAULT_POLL_INTERVAL))),
    )


class AgentClient:
    """Holds the persistent connection to the master: handshake, heartbeats,
    one build at a time, log chunks, and the final RESULT."""

    def __init__(self, config: AgentConfig, fetcher: Optional[Fetcher] = None) -> None:
        self.config = config
        self.fetcher = fetcher or (
            local_dir_fetcher(config.fetch_root) if config.fetch_root else empty_fetcher
        )
        self._stop = threading.Event()
        self._send_lock = threading.Lock()
        self._sock: Optional[socket.socket] = None
        self._seq_out = SequenceSource()
        self._proc_lock = threading.Lock()
        self._current_proc: Optional[subprocess.Popen] = None
        self._build_thread: Optional[threading.Thread] = None
        self.connected = threading.Event()

    # --- wire plumbing -------------------------------------------------

    def _send(self, kind: Kind, body: Optional[dict] = None) -> None:
        with self._send_lock:
            if self._sock is None:
                raise AgentError("not connected")
            msg = WireMessage(kind, self._seq_out.take(), body or {})
            self._sock.sendall(encode(msg))

    def _send_chunks(self, build_id: int, chunk_counter: list[int], data: bytes) -> None:
        for piece in split_chunks(data):
            with self._send_lock:
                if self._sock is None:
                    return
                msg = log_chunk(self._seq_out.take(), build_id, chunk_counter[0], piece)
                chunk_counter[0] += 1
                self._sock.sendall(encode(msg))

    # --- lifecycle -------------------------------------------------------

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.run_forever, name=f"agent-{self.config.agent_name}", daemon=True)
        thread.start()
        return thread

    def stop(self) -> None:
        self._stop.set()
        with self._proc_lock:
            if self._current_proc and self._current_proc.poll() is None:
                self._current_proc.terminate()
        sock = self._sock
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()

    def run_forever(self, reconnect_delay: float = 1.0) -> None:
        while not self._stop.is_set():
            try:
                self._serve_once()
            except (OSError, AgentError, protocol.ProtocolError):
                pass  # connection-level trouble; reconnect fresh
            finally:
                self.connected.clear()
            if not self._stop.is_set():
                self._stop.wait(reconnect_delay)

    def _serve_once(self) -> None:
        sock = socket.create_connection((self.config.master_host, self.config.master_port), timeout=10)
        sock.settimeout(None)
        self._sock = sock
        self._seq_out = SequenceSource()
        tracker = SequenceTracker()
        reader = FrameReader()
        try:
            hello = AgentHello(
                agent_name=self.config.agent_name,
                platform=self.config.platform,
                cores=self.config.cores,
                memory_mb=self.config.memory_mb,
                os_descriptor=os.uname().sysname if hasattr(os, "uname") else "",
            )
            self._send(Kind.HELLO, hello.to_body())

            heartbeat = threading.Thread(target=self._heartbeat_loop, daemon=True)
            heartbeat_started = False
            while not self._stop.is_set():
                data = sock.recv(65536)
                if not data:
                    break
                for msg in reader.feed(data):
                    tracker.check(msg.seq)
                    if msg.kind is Kind.HELLO_ACK:
                        self.connected.set()
                        if not heartbeat_started:
                            heartbeat.start()
                            heartbeat_started = True
                    elif msg.kind is Kind.ERROR:
                        raise AgentError(f"master rejected us: {msg.body}")
                    elif msg.kind is Kind.ASSIGN:
                        self._handle_assign(Assignment.from_body(msg.body))
                    elif msg.kind is Kind.CANCEL:
                        self._handle_cancel()
        finally:
            self._sock = None
            try:
                sock.close()
            except OSError:
                pass

    def _heartbeat_loop(self) -> None:
        while not self._stop.is_set() and self._sock is not None:
            try:
                self._send(Kind.HEARTBEAT)
            except (OSError, AgentError):
                return
            self._stop.wait(self.config.heartbeat_interval)

    def _handle_assign(self, assignment: Assignment) -> None:
        self._send(Kind.ACCEPT, {"build_id": assignment.build_id})
        thread = threading.Thread(
            target=self._run_assignment, args=(assignment,), name=f"build-{assignment.build_id}"
        )
        self._build_thread = thread
        thread.start()

    def _handle_cancel(self) -> None:
        with self._proc_lock:
            if self._current_proc and self._current_proc.poll() is None:
                self._current_proc.terminate()

    def _run_assignment(self, assignment: Assignment) -> None:
        chunk_counter = [0]
        extra_env = {"INSTALLDIR": self.config.installdir} if self.config.installdir else {}
        try:
            outcome = run_build(
                assignment,
                self.fetcher,
                self.config.workspace_root,
                on_chunk=lambda data: self._send_chunks(assignment.build_id, chunk_counter, data),
                extra_env=extra_env,
                unset_vars=self.config.unset_vars,
                poll_interval=self.config.poll_interval,
                on_spawn=self._register_proc,
            )
            exit_code = outcome.exit_code
            log_complete = outcome.follow_error is None
        except AgentError:
            exit_code = 1
            log_complete = False
        finally:
            with self._proc_lock:
                self._current_proc = None
        try:
            self._send(
                Kind.RESULT,
                {"build_id": assignment.build_id, "exit_code": exit_code, "log_complete": log_complete},
            )
        except (OSError, AgentError):
            pass

    def _register_proc(self, proc: subprocess.Popen) -> None:
        with self._proc_lock:
            self._current_proc = proc
