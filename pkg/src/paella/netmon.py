"""Distributed tier: edge agent, collector, and the message plane.

Wire encoding (bit-exact contract): a message is UTF-8 ``key:value``
lines in a fixed per-type order, terminated by one blank line. The
first two fields are always ``type`` and ``schema_version``. Integers
are decimal, reals shortest round-trip decimal (Python ``repr``),
booleans ``true``/``false``. String fields never contain whitespace,
so the log form of a message is the same fields joined by single
spaces on one line.

Field order per type:

* alarm:     node_id, ts_ns, model_id, outlier_fraction, decision,
             span_start_ns, span_end_ns, partial
* heartbeat: node_id, ts_ns, model_id, psd_count
* model_cmd: node_id, ts_ns, model_id
* nack:      node_id, ts_ns, model_id, reason

Topics are ``paella/<node_id>/alarm``, ``.../heartbeat`` and
``.../cmd/model``; negative acknowledgments travel on the alarm topic.
Delivery is at-least-once; consumers deduplicate on the
(type, node_id, ts_ns) key. The in-process loopback broker used by the
tests delivers synchronously in FIFO order per publisher.
"""

from __future__ import annotations

import re
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .autoencoder import load_model
from .detector import BatchVerdict, run_stream
from .errors import ModelFormatError, TransportError

SCHEMA_VERSION = 1
_IDENT = re.compile(r"^[A-Za-z0-9_.-]+$")


def _check_ident(name: str, value: str) -> None:
    if not isinstance(value, str) or not _IDENT.match(value):
        raise ValueError(
            f"{name} must match [A-Za-z0-9_.-]+, got {value!r}"
        )


@dataclass(frozen=True)
class AlarmMessage:
    node_id: str
    ts_ns: int
    model_id: str
    outlier_fraction: float
    decision: str
    span_start_ns: int
    span_end_ns: int
    partial: bool
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _check_ident("node_id", self.node_id)
        _check_ident("model_id", self.model_id)
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError(
                f"outlier_fraction must lie in [0, 1], got {self.outlier_fraction}"
            )
        if self.decision not in ("healthy", "malware"):
            raise ValueError(f"bad decision {self.decision!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"schema_version must be {SCHEMA_VERSION}")


@dataclass(frozen=True)
class HeartbeatMessage:
    node_id: str
    ts_ns: int
    model_id: str
    psd_count: int
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _check_ident("node_id", self.node_id)
        _check_ident("model_id", self.model_id)
        if self.psd_count < 0:
            raise ValueError("psd_count must be >= 0")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"schema_version must be {SCHEMA_VERSION}")


@dataclass(frozen=True)
class ModelCommand:
    node_id: str
    ts_ns: int
    model_id: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _check_ident("node_id", self.node_id)
        _check_ident("model_id", self.model_id)
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"schema_version must be {SCHEMA_VERSION}")


@dataclass(frozen=True)
class NackMessage:
    node_id: str
    ts_ns: int
    model_id: str
    reason: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _check_ident("node_id", self.node_id)
        _check_ident("model_id", self.model_id)
        if not self.reason or re.search(r"\s", self.reason):
            raise ValueError("reason must be non-empty without whitespace")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"schema_version must be {SCHEMA_VERSION}")


# (field name, value kind) per message type, in wire order
_FIELDS = {
    "alarm": (
        ("node_id", "str"), ("ts_ns", "int"), ("model_id", "str"),
        ("outlier_fraction", "float"), ("decision", "str"),
        ("span_start_ns", "int"), ("span_end_ns", "int"), ("partial", "bool"),
    ),
    "heartbeat": (
        ("node_id", "str"), ("ts_ns", "int"), ("model_id", "str"),
        ("psd_count", "int"),
    ),
    "model_cmd": (
        ("node_id", "str"), ("ts_ns", "int"), ("model_id", "str"),
    ),
    "nack": (
        ("node_id", "str"), ("ts_ns", "int"), ("model_id", "str"),
        ("reason", "str"),
    ),
}
_CLASSES = {
    "alarm": AlarmMessage,
    "heartbeat": HeartbeatMessage,
    "model_cmd": ModelCommand,
    "nack": NackMessage,
}
_TYPE_OF = {cls: name for name, cls in _CLASSES.items()}


def _encode_value(kind: str, value) -> str:
    if kind == "str":
        return value
    if kind == "int":
        return str(int(value))
    if kind == "float":
        return repr(float(value))
    return "true" if value else "false"


def _decode_value(kind: str, text: str):
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"bad boolean {text!r}")


def _pairs(msg) -> list:
    kind = _TYPE_OF.get(type(msg))
    if kind is None:
        raise ValueError(f"not a wire message: {msg!r}")
    pairs = [("type", kind), ("schema_version", str(msg.schema_version))]
    for name, value_kind in _FIELDS[kind]:
        pairs.append((name, _encode_value(value_kind, getattr(msg, name))))
    return pairs


def _from_pairs(pairs):
    if len(pairs) < 2 or pairs[0][0] != "type" or pairs[1][0] != "schema_version":
        raise ValueError("message must start with type and schema_version")
    kind = pairs[0][1]
    fields = _FIELDS.get(kind)
    if fields is None:
        raise ValueError(f"unknown message type {kind!r}")
    expected = ["type", "schema_version"] + [name for name, _ in fields]
    got = [k for k, _ in pairs]
    if got != expected:
        raise ValueError(f"fields {got} do not match the {kind} schema {expected}")
    kwargs = {"schema_version": int(pairs[1][1])}
    for (name, value_kind), (_, text) in zip(fields, pairs[2:]):
        kwargs[name] = _decode_value(value_kind, text)
    return _CLASSES[kind](**kwargs)


def encode_message(msg) -> bytes:
    """Wire form: key:value lines plus the blank-line terminator."""
    lines = [f"{k}:{v}" for k, v in _pairs(msg)]
    return ("\n".join(lines) + "\n\n").encode("utf-8")


def decode_message(data: bytes):
    text = data.decode("utf-8")
    if not text.endswith("\n\n"):
        raise ValueError("message must end with a blank line")
    pairs = []
    for line in text[:-2].split("\n"):
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"line {line!r} is not key:value")
        pairs.append((key, value))
    return _from_pairs(pairs)


def encode_log_line(msg) -> str:
    """Log form: the same fields space-joined on one line (no newline)."""
    return " ".join(f"{k}:{v}" for k, v in _pairs(msg))


def decode_log_line(line: str):
    pairs = []
    for token in line.strip("\n").split(" "):
        key, sep, value = token.partition(":")
        if not sep:
            raise ValueError(f"token {token!r} is not key:value")
        pairs.append((key, value))
    return _from_pairs(pairs)


def alarm_topic(node_id: str) -> str:
    return f"paella/{node_id}/alarm"


def heartbeat_topic(node_id: str) -> str:
    return f"paella/{node_id}/heartbeat"


def model_cmd_topic(node_id: str) -> str:
    return f"paella/{node_id}/cmd/model"


def alarm_from_verdict(verdict: BatchVerdict, node_id: str, ts_ns: int = None) -> AlarmMessage:
    """Alarm for one verdict; its timestamp is the batch span end."""
    start, end = verdict.window_span_ns
    return AlarmMessage(
        node_id=node_id,
        ts_ns=end if ts_ns is None else ts_ns,
        model_id=verdict.model_id or "default",
        outlier_fraction=verdict.outlier_fraction,
        decision=verdict.decision,
        span_start_ns=start,
        span_end_ns=end,
        partial=verdict.partial,
    )


def topic_matches(pattern: str, topic: str) -> bool:
    """Topic filter semantics: + matches one level, # the whole remainder."""
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    for i, p in enumerate(p_parts):
        if p == "#":
            return True
        if i >= len(t_parts):
            return False
        if p != "+" and p != t_parts[i]:
            return False
    return len(p_parts) == len(t_parts)


class LoopbackBroker:
    """In-process synchronous broker; delivery is FIFO per publisher.

    ``set_down(True)`` makes publishes fail for fault-injection tests.
    """

    def __init__(self):
        self._subs = []
        self._lock = threading.RLock()
        self._down = False

    def subscribe(self, pattern: str, callback) -> None:
        with self._lock:
            self._subs.append((pattern, callback))

    def publish(self, topic: str, payload: bytes) -> None:
        with self._lock:
            if self._down:
                raise TransportError("loopback transport is down")
            targets = [cb for pat, cb in self._subs if topic_matches(pat, topic)]
        for cb in targets:
            cb(topic, payload)

    def set_down(self, down: bool) -> None:
        with self._lock:
            self._down = bool(down)

    def close(self) -> None:
        with self._lock:
            self._subs.clear()


class BufferedPublisher:
    """At-least-once publisher with a bounded in-order retry buffer.

    A failed publish is buffered; later publishes first drain the buffer
    so per-publisher order is preserved. Overflowing the buffer raises
    TransportError with the messages still queued.
    """

    def __init__(self, transport, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._transport = transport
        self._buffer = deque()
        self._capacity = capacity
        self._lock = threading.Lock()

    @property
    def pending(self) -> int:
        with self._lock:
            return len(self._buffer)

    def _drain(self) -> bool:
        while self._buffer:
            topic, payload = self._buffer[0]
            try:
                self._transport.publish(topic, payload)
            except TransportError:
                return False
            self._buffer.popleft()
        return True

    def publish(self, topic: str, payload: bytes) -> None:
        with self._lock:
            if self._drain():
                try:
                    self._transport.publish(topic, payload)
                    return
                except TransportError:
                    pass
            self._buffer.append((topic, payload))
            if len(self._buffer) > self._capacity:
                raise TransportError(
                    f"retry buffer overflow ({self._capacity} messages pending)"
                )

    def flush(self) -> None:
        with self._lock:
            if not self._drain():
                raise TransportError(
                    f"transport still down with {len(self._buffer)} messages pending"
                )


class Collector:
    """Aggregates alarms and heartbeats into an append-only log.

    Malformed payloads go to a dead-letter file and processing
    continues. Duplicate deliveries (at-least-once transports) are
    detected by the (type, node_id, ts_ns) key and skipped.
    """

    def __init__(self, broker, log_path, dead_letter_path=None,
                 patterns=("paella/+/alarm", "paella/+/heartbeat")):
        self._log = open(log_path, "a", encoding="utf-8")
        self._dead = open(dead_letter_path, "a", encoding="utf-8") if dead_letter_path else None
        self._lock = threading.Lock()
        self._seen = set()
        self._nodes = {}
        self.duplicates = 0
        self.dead_letters = 0
        for pattern in patterns:
            broker.subscribe(pattern, self.on_message)

    def on_message(self, topic: str, payload: bytes) -> None:
        try:
            msg = decode_message(payload)
        except (ValueError, UnicodeDecodeError) as exc:
            with self._lock:
                self.dead_letters += 1
                if self._dead:
                    self._dead.write(f"{topic} {exc} payload={payload!r}\n")
                    self._dead.flush()
            return
        key = (type(msg).__name__, msg.node_id, msg.ts_ns)
        with self._lock:
            if key in self._seen:
                self.duplicates += 1
                return
            self._seen.add(key)
            self._log.write(encode_log_line(msg) + "\n")
            self._log.flush()
            node = self._nodes.setdefault(
                msg.node_id,
                {"last_seen_ns": None, "last_decision": None,
                 "alarms": 0, "heartbeats": 0, "nacks": 0},
            )
            node["last_seen_ns"] = msg.ts_ns
            if isinstance(msg, AlarmMessage):
                node["alarms"] += 1
                node["last_decision"] = msg.decision
            elif isinstance(msg, HeartbeatMessage):
                node["heartbeats"] += 1
            elif isinstance(msg, NackMessage):
                node["nacks"] += 1

    def status(self) -> dict:
        with self._lock:
            return {node: dict(state) for node, state in self._nodes.items()}

    def close(self) -> None:
        with self._lock:
            self._log.close()
            if self._dead:
                self._dead.close()


class _ModelStore:
    """Directory of <model_id>.paem files, loaded on demand."""

    def __init__(self, directory):
        self._dir = Path(directory)

    def load(self, model_id: str):
        _check_ident("model_id", model_id)
        path = self._dir / f"{model_id}.paem"
        if not path.is_file():
            raise FileNotFoundError(f"no model file {path}")
        return load_model(path)


def agent_run(
    trace_source,
    model_store,
    welch_cfg,
    det_cfg,
    broker,
    node_id: str,
    sample_rate_hz: float = None,
    t0_ns: int = 0,
    heartbeat_every_s: float = 10.0,
    buffer_capacity: int = 1024,
) -> None:
    """Run the detector over a stream and publish every verdict.

    Model-selection commands on ``paella/<node_id>/cmd/model`` are
    honored at the next batch boundary; a command naming a model the
    store cannot load draws a negative acknowledgment on the alarm
    topic and the current model stays active. A heartbeat is published
    whenever the stream clock passes another ``heartbeat_every_s``.
    """
    _check_ident("node_id", node_id)
    store = _ModelStore(model_store)
    publisher = BufferedPublisher(broker, capacity=buffer_capacity)
    lock = threading.Lock()
    state = {
        "model": store.load(det_cfg.model_id or "default"),
        "model_id": det_cfg.model_id or "default",
        "psd_count": 0,
        "next_hb_ns": None,
    }

    def on_command(topic: str, payload: bytes) -> None:
        try:
            cmd = decode_message(payload)
        except (ValueError, UnicodeDecodeError):
            return
        if not isinstance(cmd, ModelCommand) or cmd.node_id != node_id:
            return
        try:
            model = store.load(cmd.model_id)
        except (FileNotFoundError, ModelFormatError, ValueError):
            publisher.publish(
                alarm_topic(node_id),
                encode_message(
                    NackMessage(node_id, cmd.ts_ns, cmd.model_id, "unknown_model")
                ),
            )
            return
        with lock:
            state["model"] = model
            state["model_id"] = cmd.model_id

    def model_supplier():
        with lock:
            return state["model"], state["model_id"]

    def sink(verdict: BatchVerdict) -> None:
        alarm = alarm_from_verdict(verdict, node_id)
        publisher.publish(alarm_topic(node_id), encode_message(alarm))
        state["psd_count"] += verdict.total
        interval_ns = int(heartbeat_every_s * 1e9)
        if state["next_hb_ns"] is None:
            state["next_hb_ns"] = verdict.window_span_ns[0] + interval_ns
        while verdict.window_span_ns[1] >= state["next_hb_ns"]:
            hb = HeartbeatMessage(
                node_id=node_id,
                ts_ns=state["next_hb_ns"],
                model_id=verdict.model_id or "default",
                psd_count=state["psd_count"],
            )
            publisher.publish(heartbeat_topic(node_id), encode_message(hb))
            state["next_hb_ns"] += interval_ns

    broker.subscribe(model_cmd_topic(node_id), on_command)
    run_stream(
        trace_source,
        state["model"],
        welch_cfg,
        det_cfg,
        sink,
        sample_rate_hz=sample_rate_hz,
        t0_ns=t0_ns,
        model_supplier=model_supplier,
    )
    publisher.flush()


class MqttTransport:
    """Thin adapter over an MQTT client; constructed only when used.

    URL form: mqtt://host[:port]. QoS 1 matches the at-least-once
    contract. This adapter is exercised only against a live broker.
    """

    def __init__(self, url: str, client_id: str = None):
        try:
            import paho.mqtt.client as mqtt
        except ImportError as exc:
            raise TransportError(
                "paho-mqtt is not installed; install the 'mqtt' extra"
            ) from exc
        m = re.match(r"^mqtt://([^:/]+)(?::(\d+))?$", url)
        if not m:
            raise ValueError(f"bad broker url {url!r}, expected mqtt://host[:port]")
        self._client = mqtt.Client(client_id=client_id)
        self._callbacks = []
        self._client.on_message = self._dispatch
        self._client.connect(m.group(1), int(m.group(2) or 1883))
        self._client.loop_start()

    def _dispatch(self, client, userdata, message) -> None:
        for pattern, callback in self._callbacks:
            if topic_matches(pattern, message.topic):
                callback(message.topic, message.payload)

    def subscribe(self, pattern: str, callback) -> None:
        self._callbacks.append((pattern, callback))
        self._client.subscribe(pattern, qos=1)

    def publish(self, topic: str, payload: bytes) -> None:
        info = self._client.publish(topic, payload, qos=1)
        if info.rc != 0:
            raise TransportError(f"publish failed with rc={info.rc}")

    def close(self) -> None:
        self._client.loop_stop()
        self._client.disconnect()


def make_transport(url: str):
    """loopback: -> in-process broker; mqtt://host[:port] -> MQTT adapter."""
    if url in ("loopback", "loopback:"):
        return LoopbackBroker()
    if url.startswith("mqtt://"):
        return MqttTransport(url)
    raise ValueError(f"unknown broker url {url!r}")
