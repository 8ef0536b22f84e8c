"""Coordinator and wire protocol for a two-station run.

Framing is a 4-byte big-endian length followed by a UTF-8 JSON body. A station
connects, says ``hello`` with its role, receives ``assign`` (common seed, trial
count, its own policy), streams ``records`` chunks (column lists of trial,
setting, sign and weight) and waits for ``ack`` or
``abort``. The coordinator acks only after both record sets are on disk, so
neither station ever receives anything derived from the other.

The in-process transport runs both stations as threads on socket pairs with
the same bytes on the wire as TCP.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Union

import numpy as np

from . import model, prng
from .errors import ConfigError, IntegrityError, ProtocolError, RunAborted, ValidationError
from .station import (
    RECORD_COLUMNS,
    AnglePolicy,
    Fixed,
    RecordSet,
    Schedule,
    SeededRandom,
    policy_from_dict,
    policy_to_dict,
    read_records,
    run_station,
    write_records,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
CHUNK_SIZE = 4096
MAX_FRAME = 64 * 1024 * 1024
_HEADER = struct.Struct("!I")

RECORD_FILES = {1: "station1.records", 2: "station2.records"}
MANIFEST_FILE = "manifest.json"

# tags for default Ekert choice seeds derived from the run seed
_EKERT_SEED_TAGS = (0x656B31, 0x656B32)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class SingleMode:
    a: float
    b: float
    kind: str = field(default="single", init=False)


@dataclass(frozen=True)
class ChshMode:
    a: float
    a_prime: float
    b: float
    b_prime: float
    boundaries: tuple[tuple[int, int], ...] | None = None
    kind: str = field(default="chsh", init=False)


@dataclass(frozen=True)
class EkertMode:
    angle_set: tuple[float, ...]
    choice_seeds: tuple[int, int]
    kind: str = field(default="ekert", init=False)


@dataclass(frozen=True)
class InProcessTransport:
    timeout: float = 60.0
    kind: str = field(default="in-process", init=False)


@dataclass(frozen=True)
class TcpTransport:
    host: str = "127.0.0.1"
    port: int = 0
    timeout: float = 30.0
    kind: str = field(default="tcp", init=False)


Mode = Union[SingleMode, ChshMode, EkertMode]
Transport = Union[InProcessTransport, TcpTransport]


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n: int
    mode: Mode
    transport: Transport = InProcessTransport()
    output_dir: Path = Path("run")

    def to_dict(self) -> dict:
        m = self.mode
        if isinstance(m, SingleMode):
            mode = {"kind": "single", "a": m.a, "b": m.b}
        elif isinstance(m, ChshMode):
            mode = {"kind": "chsh", "a": m.a, "a_prime": m.a_prime, "b": m.b, "b_prime": m.b_prime}
            mode["boundaries"] = [list(r) for r in chsh_boundaries(self.n, m.boundaries)]
        else:
            mode = {
                "kind": "ekert",
                "angle_set": list(m.angle_set),
                "choice_seeds": [prng.format_seed(s) for s in m.choice_seeds],
            }
        t = self.transport
        if isinstance(t, TcpTransport):
            transport = {"kind": "tcp", "host": t.host, "port": t.port, "timeout": t.timeout}
        else:
            transport = {"kind": "in-process", "timeout": t.timeout}
        return {
            "seed": prng.format_seed(self.seed),
            "n": self.n,
            "mode": mode,
            "transport": transport,
            "output_dir": str(self.output_dir),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("", "config must be a JSON object")
        unknown = set(d) - {"seed", "n", "mode", "transport", "output_dir"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        seed = _field(d, "seed", prng.parse_seed, "expected decimal or 0x-hex 64-bit integer")
        n = _field(d, "n", _count, "expected non-negative integer")
        mode = _parse_mode(d.get("mode"), seed, n)
        transport = _parse_transport(d.get("transport", {"kind": "in-process"}))
        output_dir = Path(d.get("output_dir", "run"))
        cfg = cls(seed=seed, n=n, mode=mode, transport=transport, output_dir=output_dir)
        station_policies(cfg)
        return cfg

    @property
    def run_id(self) -> str:
        body = dict(self.to_dict())
        # where and how a run executes does not change what it measures
        body.pop("output_dir")
        body.pop("transport")
        return hashlib.sha256(_canonical_json(body)).hexdigest()[:16]


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _count(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 0:
        raise ValueError(x)
    return x


def _field(d: dict, key: str, parse, expected: str, path: str = ""):
    full = f"{path}.{key}" if path else key
    if key not in d:
        raise ConfigError(full, "missing required field")
    try:
        return parse(d[key])
    except (ValueError, TypeError):
        raise ConfigError(full, f"{expected}, got {d[key]!r}") from None


def _parse_mode(d, seed: int, n: int) -> Mode:
    if not isinstance(d, dict):
        raise ConfigError("mode", "expected object with a 'kind' field")
    kind = d.get("kind")
    angle = "expected angle in radians or a pi fraction"
    if kind == "single":
        return SingleMode(
            a=model.normalize_angle(_field(d, "a", model.parse_angle, angle, "mode")),
            b=model.normalize_angle(_field(d, "b", model.parse_angle, angle, "mode")),
        )
    if kind == "chsh":
        vals = {k: model.normalize_angle(_field(d, k, model.parse_angle, angle, "mode")) for k in ("a", "a_prime", "b", "b_prime")}
        boundaries = None
        if d.get("boundaries") is not None:
            try:
                boundaries = tuple((int(s), int(e)) for s, e in d["boundaries"])
            except (TypeError, ValueError):
                raise ConfigError("mode.boundaries", "expected list of [start, stop] pairs") from None
        return ChshMode(boundaries=boundaries, **vals)
    if kind == "ekert":
        raw = d.get("angle_set")
        if not isinstance(raw, list):
            raise ConfigError("mode.angle_set", "expected list of angles")
        angles = []
        for i, x in enumerate(raw):
            try:
                angles.append(model.normalize_angle(model.parse_angle(x)))
            except ValueError:
                raise ConfigError(f"mode.angle_set[{i}]", f"{angle}, got {x!r}") from None
        if "choice_seeds" in d:
            cs = d["choice_seeds"]
            if not isinstance(cs, list) or len(cs) != 2:
                raise ConfigError("mode.choice_seeds", "expected a pair of seeds")
            seeds = []
            for i, s in enumerate(cs):
                try:
                    seeds.append(prng.parse_seed(s))
                except ValueError:
                    raise ConfigError(f"mode.choice_seeds[{i}]", f"expected 64-bit seed, got {s!r}") from None
            choice_seeds = (seeds[0], seeds[1])
        else:
            choice_seeds = default_choice_seeds(seed)
        return EkertMode(angle_set=tuple(angles), choice_seeds=choice_seeds)
    raise ConfigError("mode.kind", f"expected 'single', 'chsh' or 'ekert', got {kind!r}")


def _parse_transport(d) -> Transport:
    if not isinstance(d, dict):
        raise ConfigError("transport", "expected object with a 'kind' field")
    kind = d.get("kind", "in-process")

    def timeout(x):
        x = float(x)
        if not x > 0 or not math.isfinite(x):
            raise ValueError(x)
        return x

    if kind == "in-process":
        t = _field(d, "timeout", timeout, "expected positive seconds", "transport") if "timeout" in d else 60.0
        return InProcessTransport(timeout=t)
    if kind == "tcp":
        host = d.get("host", "127.0.0.1")
        if not isinstance(host, str):
            raise ConfigError("transport.host", "expected string")
        port = _field(d, "port", _port, "expected port 0-65535", "transport") if "port" in d else 0
        t = _field(d, "timeout", timeout, "expected positive seconds", "transport") if "timeout" in d else 30.0
        return TcpTransport(host=host, port=port, timeout=t)
    raise ConfigError("transport.kind", f"expected 'in-process' or 'tcp', got {kind!r}")


def _port(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x <= 65535:
        raise ValueError(x)
    return x


def default_choice_seeds(seed: int) -> tuple[int, int]:
    return prng.derive_seed(seed, _EKERT_SEED_TAGS[0]), prng.derive_seed(seed, _EKERT_SEED_TAGS[1])


# -- schedules ---------------------------------------------------------------


def chsh_boundaries(n: int, boundaries=None) -> tuple[tuple[int, int], ...]:
    """Four contiguous ranges covering [0, n); the last absorbs any remainder."""
    if boundaries is None:
        if n < 4:
            raise ConfigError("n", f"CHSH needs n >= 4, got {n}")
        q = n // 4
        return ((0, q), (q, 2 * q), (2 * q, 3 * q), (3 * q, n))
    b = tuple((int(s), int(e)) for s, e in boundaries)
    if len(b) != 4:
        raise ConfigError("mode.boundaries", f"expected exactly 4 ranges, got {len(b)}")
    expected = 0
    for i, (s, e) in enumerate(b):
        if s != expected or e <= s:
            raise ConfigError(f"mode.boundaries[{i}]", f"ranges must partition [0, {n}) in order")
        expected = e
    if expected != n:
        raise ConfigError("mode.boundaries", f"ranges end at {expected}, expected n = {n}")
    return b


def chsh_schedule(n: int, a: float, a_prime: float, b: float, b_prime: float, boundaries=None) -> tuple[Schedule, Schedule]:
    """Station 1 uses a on quarters 1-2 and a' on 3-4; station 2 uses b on 1,3 and b' on 2,4."""
    ranges = chsh_boundaries(n, boundaries)
    return (
        Schedule(ranges, (a, a, a_prime, a_prime)),
        Schedule(ranges, (b, b_prime, b, b_prime)),
    )


def ekert_policies(cfg: RunConfig) -> tuple[SeededRandom, SeededRandom]:
    m = cfg.mode
    if not isinstance(m, EkertMode):
        raise ConfigError("mode.kind", "expected 'ekert'")
    if not m.angle_set:
        raise ConfigError("mode.angle_set", "angle set must be nonempty")
    s1, s2 = m.choice_seeds
    if s1 == s2:
        raise ConfigError("mode.choice_seeds", "stations need distinct choice seeds")
    return SeededRandom(m.angle_set, s1), SeededRandom(m.angle_set, s2)


def station_policies(cfg: RunConfig) -> tuple[AnglePolicy, AnglePolicy]:
    m = cfg.mode
    if isinstance(m, SingleMode):
        return Fixed(m.a), Fixed(m.b)
    if isinstance(m, ChshMode):
        return chsh_schedule(cfg.n, m.a, m.a_prime, m.b, m.b_prime, m.boundaries)
    return ekert_policies(cfg)


# -- wire messages -----------------------------------------------------------


@dataclass(frozen=True)
class Hello:
    role: int
    protocol_version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class Assign:
    seed: int
    n: int
    policy: AnglePolicy


@dataclass(frozen=True)
class RecordsChunk:
    """Consecutive records of one station in column form (see ``RECORD_COLUMNS``)."""

    records: dict
    last: bool


@dataclass(frozen=True)
class Ack:
    pass


@dataclass(frozen=True)
class Abort:
    reason: str


WireMessage = Union[Hello, Assign, RecordsChunk, Ack, Abort]


def encode_message(msg: WireMessage) -> bytes:
    if isinstance(msg, Hello):
        body = {"type": "hello", "role": msg.role, "version": msg.protocol_version}
    elif isinstance(msg, Assign):
        body = {"type": "assign", "seed": prng.format_seed(msg.seed), "n": msg.n, "policy": policy_to_dict(msg.policy)}
    elif isinstance(msg, RecordsChunk):
        body = {"type": "records", "records": msg.records, "last": msg.last}
    elif isinstance(msg, Ack):
        body = {"type": "ack"}
    elif isinstance(msg, Abort):
        body = {"type": "abort", "reason": msg.reason}
    else:
        raise TypeError(f"not a wire message: {msg!r}")
    return _canonical_json(body)


def decode_message(data: bytes) -> WireMessage:
    try:
        body = json.loads(data.decode("utf-8"))
        kind = body["type"]
        if kind == "hello":
            return Hello(int(body["role"]), int(body["version"]))
        if kind == "assign":
            return Assign(prng.parse_seed(body["seed"]), int(body["n"]), policy_from_dict(body["policy"]))
        if kind == "records":
            return RecordsChunk(_decode_columns(body["records"]), bool(body["last"]))
        if kind == "ack":
            return Ack()
        if kind == "abort":
            return Abort(str(body["reason"]))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed message: {exc}") from None
    raise ProtocolError(f"unknown message type {kind!r}")


def _decode_columns(cols) -> dict:
    if not isinstance(cols, dict) or set(cols) != set(RECORD_COLUMNS):
        raise ValueError(f"records must have exactly the columns {', '.join(RECORD_COLUMNS)}")
    if not all(isinstance(cols[k], list) for k in RECORD_COLUMNS) or len({len(cols[k]) for k in RECORD_COLUMNS}) != 1:
        raise ValueError("record columns must be lists of equal length")
    return {k: cols[k] for k in RECORD_COLUMNS}


def frame(body: bytes) -> bytes:
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds limit")
    return _HEADER.pack(len(body)) + body


class Channel:
    """Framed message I/O on a connected socket. ``sent`` keeps every outbound byte."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.sent = bytearray()
        self._send_lock = threading.Lock()

    def send(self, msg: WireMessage) -> None:
        data = frame(encode_message(msg))
        with self._send_lock:
            self.sock.sendall(data)
            self.sent += data

    def _recv_exact(self, size: int) -> bytes:
        buf = bytearray(size)
        view = memoryview(buf)
        got = 0
        while got < size:
            k = self.sock.recv_into(view[got:])
            if not k:
                raise ProtocolError("connection closed by peer")
            got += k
        return bytes(buf)

    def recv(self, timeout: float | None) -> WireMessage:
        """Next message; raises TimeoutError when ``timeout`` seconds pass first."""
        if timeout is not None and timeout <= 0:
            raise TimeoutError("deadline passed")
        self.sock.settimeout(timeout)
        try:
            (size,) = _HEADER.unpack(self._recv_exact(_HEADER.size))
            if size > MAX_FRAME:
                raise ProtocolError(f"frame of {size} bytes exceeds limit")
            return decode_message(self._recv_exact(size))
        except socket.timeout:
            raise TimeoutError("timed out waiting for message") from None

    def close(self) -> None:
        try:
            # shutdown wakes any thread blocked in recv on this socket
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


# -- station side ------------------------------------------------------------


def station_session(role: int, ch: Channel, timeout: float = 120.0, protocol_version: int = PROTOCOL_VERSION) -> RecordSet:
    """Run one station against a coordinator; returns its records once the run is acknowledged."""
    ch.send(Hello(role, protocol_version))
    msg = ch.recv(timeout)
    if isinstance(msg, Abort):
        raise RunAborted(msg.reason)
    if not isinstance(msg, Assign):
        raise ProtocolError(f"expected assign, got {type(msg).__name__}")
    try:
        records = run_station(role, msg.seed, msg.n, msg.policy)
    except ValidationError as exc:
        ch.send(Abort(f"station {role}: {exc}"))
        raise
    n = len(records)
    for start in range(0, max(n, 1), CHUNK_SIZE):
        stop = min(start + CHUNK_SIZE, n)
        ch.send(RecordsChunk(records.columns(start, stop), last=stop >= n))
    log.debug("station %d sent %d records", role, n)
    final = ch.recv(timeout)
    if isinstance(final, Abort):
        raise RunAborted(final.reason)
    if not isinstance(final, Ack):
        raise ProtocolError(f"expected ack, got {type(final).__name__}")
    return records


def connect_station(role: int, host: str, port: int, timeout: float = 120.0, connect_timeout: float = 30.0) -> RecordSet:
    """Dial a coordinator (retrying until ``connect_timeout``) and run one station."""
    give_up = time.monotonic() + connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=5.0)
            break
        except OSError:
            if time.monotonic() >= give_up:
                raise
            time.sleep(0.1)
    ch = Channel(sock)
    try:
        return station_session(role, ch, timeout)
    finally:
        ch.close()


# -- coordinator side --------------------------------------------------------


@dataclass
class RunArtifacts:
    output_dir: Path
    config: RunConfig
    manifest: dict
    record_paths: dict[int, Path]

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / MANIFEST_FILE

    @property
    def status(self) -> str:
        return self.manifest["status"]

    def load_records(self, role: int) -> RecordSet:
        return read_records(self.record_paths[role])


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Coordinator:
    """Drives one run: hands out seed and private policies, collects records, persists artifacts."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.policies = dict(zip((1, 2), station_policies(cfg)))
        self._cond = threading.Condition()
        self._channels: dict[int, Channel] = {}
        self._records: dict[int, RecordSet] = {}
        self._failure: str | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listener: socket.socket | None = None
        self.station_errors: dict[int, BaseException] = {}

    @property
    def outbound(self) -> dict[int, bytes]:
        """Bytes sent to each registered station so far."""
        return {role: bytes(ch.sent) for role, ch in self._channels.items()}

    def bind(self) -> tuple[str, int]:
        """Open the TCP listener (tcp transport only); returns the bound address."""
        t = self.cfg.transport
        if not isinstance(t, TcpTransport):
            raise ConfigError("transport.kind", "bind() needs tcp transport")
        if self._listener is None:
            srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            srv.bind((t.host, t.port))
            srv.listen(4)
            self._listener = srv
        host, port = self._listener.getsockname()[:2]
        return host, port

    def _fail(self, reason: str) -> None:
        with self._cond:
            if self._failure is None:
                self._failure = reason
                log.info("run failing: %s", reason)
            self._cond.notify_all()

    def _spawn(self, target, *args) -> None:
        th = threading.Thread(target=target, args=args, daemon=True)
        th.start()
        self._threads.append(th)

    def _session(self, ch: Channel, deadline: float) -> None:
        role = None
        try:
            hello = ch.recv(deadline - time.monotonic())
            if not isinstance(hello, Hello):
                raise ProtocolError(f"expected hello, got {type(hello).__name__}")
            if hello.protocol_version != PROTOCOL_VERSION:
                reason = f"protocol version mismatch: station {hello.protocol_version}, coordinator {PROTOCOL_VERSION}"
                ch.send(Abort(reason))
                ch.close()
                self._fail(reason)
                return
            with self._cond:
                taken = hello.role in self._channels
                if hello.role in (1, 2) and not taken:
                    self._channels[hello.role] = ch
                    role = hello.role
            if role is None:
                ch.send(Abort(f"role {hello.role} unavailable"))
                ch.close()
                return
            ch.send(Assign(self.cfg.seed, self.cfg.n, self.policies[role]))
            cols: dict[str, list] = {k: [] for k in RECORD_COLUMNS}
            while True:
                msg = ch.recv(deadline - time.monotonic())
                if isinstance(msg, Abort):
                    raise ProtocolError(f"station aborted: {msg.reason}")
                if not isinstance(msg, RecordsChunk):
                    raise ProtocolError(f"expected records, got {type(msg).__name__}")
                for k in RECORD_COLUMNS:
                    cols[k].extend(msg.records[k])
                if msg.last:
                    break
            records = _columns_to_records(role, self.cfg.seed, cols)
            if len(records) != self.cfg.n:
                raise IntegrityError(f"expected {self.cfg.n} records, got {len(records)}")
            with self._cond:
                self._records[role] = records
                self._cond.notify_all()
        except TimeoutError:
            self._fail("timeout")
        except (ProtocolError, IntegrityError, OSError, ValueError) as exc:
            self._fail(f"station {role or '?'}: {exc}")

    def _accept_loop(self, deadline: float) -> None:
        srv = self._listener
        srv.settimeout(0.05)
        while not self._stop.is_set() and time.monotonic() < deadline:
            try:
                conn, addr = srv.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            log.info("station connected from %s:%s", *addr[:2])
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._spawn(self._session, Channel(conn), deadline)

    def _local_station(self, role: int, sock: socket.socket, timeout: float) -> None:
        ch = Channel(sock)
        try:
            station_session(role, ch, timeout)
        except BaseException as exc:  # recorded for inspection; the coordinator decides the outcome
            self.station_errors[role] = exc
        finally:
            ch.close()

    def run(self) -> RunArtifacts:
        started = _utc_now()
        timeout = self.cfg.transport.timeout
        deadline = time.monotonic() + timeout
        if isinstance(self.cfg.transport, TcpTransport):
            host, port = self.bind()
            log.info("coordinator listening on %s:%d", host, port)
            self._spawn(self._accept_loop, deadline)
        else:
            for role in (1, 2):
                ours, theirs = socket.socketpair()
                self._spawn(self._local_station, role, theirs, timeout)
                self._spawn(self._session, Channel(ours), deadline)
        try:
            with self._cond:
                while len(self._records) < 2 and self._failure is None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        self._failure = "timeout"
                        break
                    self._cond.wait(remaining)
                failure = self._failure
                records = dict(self._records)
        finally:
            self._stop.set()
            if self._listener is not None:
                self._listener.close()
                self._listener = None

        if failure is None:
            artifacts = self._write(records, started, status="complete")
            for ch in self._channels.values():
                _send_quietly(ch, Ack())
            self._close_all()
            return artifacts

        for ch in self._channels.values():
            _send_quietly(ch, Abort(failure))
        self._close_all()
        artifacts = self._write(records, started, status="aborted", reason=failure)
        raise RunAborted(failure, artifacts)

    def _close_all(self) -> None:
        for ch in self._channels.values():
            ch.close()
        for th in self._threads:
            th.join(timeout=5.0)

    def _write(self, records: dict[int, RecordSet], started: str, status: str, reason: str | None = None) -> RunArtifacts:
        out = Path(self.cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        files, paths = [], {}
        for role in (1, 2):
            path = out / RECORD_FILES[role]
            if role in records:
                write_records(records[role], path)
                files.append({"path": RECORD_FILES[role], "role": role, "sha256": _sha256(path), "records": len(records[role])})
                paths[role] = path
            elif path.exists():
                path.unlink()
        manifest = {
            "config": self.cfg.to_dict(),
            "run_id": self.cfg.run_id,
            "files": files,
            "started": started,
            "finished": _utc_now(),
            "status": status,
        }
        if reason is not None:
            manifest["reason"] = reason
        (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return RunArtifacts(out, self.cfg, manifest, paths)


def _send_quietly(ch: Channel, msg: WireMessage) -> None:
    try:
        ch.send(msg)
    except OSError:
        pass


def _columns_to_records(role: int, seed: int, cols: dict[str, list]) -> RecordSet:
    try:
        records = RecordSet(role, seed, *(cols[k] for k in RECORD_COLUMNS))
    except (TypeError, ValueError, OverflowError) as exc:
        raise ProtocolError(f"malformed record columns: {exc}") from None
    if not np.array_equal(records.trial, np.arange(len(records))):
        raise IntegrityError("records must cover trials 0..n-1 in order")
    records.validate()
    return records


def coordinate_run(cfg: RunConfig) -> RunArtifacts:
    return Coordinator(cfg).run()


def load_artifacts(output_dir) -> tuple[RunConfig, dict[int, RecordSet], dict]:
    """Re-read a completed run, checking manifest hashes and record counts."""
    out = Path(output_dir)
    try:
        manifest = json.loads((out / MANIFEST_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IntegrityError(f"{out / MANIFEST_FILE}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{out / MANIFEST_FILE}: {exc}") from None
    if manifest.get("status") != "complete":
        raise IntegrityError(f"run in {out} is not complete (status={manifest.get('status')!r})")
    cfg = RunConfig.from_dict(manifest["config"])
    records = {}
    for entry in manifest["files"]:
        path = out / entry["path"]
        if _sha256(path) != entry["sha256"]:
            raise IntegrityError(f"{path}: sha256 does not match manifest")
        rs = read_records(path)
        if len(rs) != entry["records"] or len(rs) != cfg.n:
            raise IntegrityError(f"{path}: record count mismatch")
        records[rs.role] = rs
    if set(records) != {1, 2}:
        raise IntegrityError("manifest must list one record file per station")
    return cfg, records, manifest
