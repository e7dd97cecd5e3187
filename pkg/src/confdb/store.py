"""Durable append-only object store with serializable write transactions.

On disk a store is one directory:

* ``objects.log`` -- the append-only record log.  Each record is
  ``magic octet, record type, 4-octet big-endian body length, body,
  4-octet big-endian CRC-32 of body``.  An object record's body is the
  identity text, a creation-timestamp line, then the canonical payload;
  a transaction is closed by a commit record whose body is its object
  record count.  Torn tails (a crash mid-append) are detected by the
  framing plus CRC and truncated away on the next open; a bad record
  that is *not* the tail means real damage and refuses to open.
* ``aliases.dat`` -- the one mutable side region (alias trees), rewritten
  atomically via write-temp-then-rename, never touching the log.
* ``LOCK`` -- flock target guarding single-writer access, including
  across processes.

Objects are immutable once committed: there is no update or delete.
Config keys are dense per (class name, secondary key) pair because the
writer lock is held from ``begin()`` and aborted transactions never
consume keys.  Readers are lock-free: committed state is published as a
whole-snapshot swap, so any reader sees a prefix of committed
transactions.
"""

from __future__ import annotations

import fcntl
import os
import threading
import time
import zlib
from contextlib import contextmanager
from dataclasses import dataclass

from .errors import (
    CorruptLogError,
    DanglingLinkError,
    InvalidPayloadError,
    NotAMapError,
    NotFoundError,
    TransactionClosedError,
)
from .model import (
    KIND_MAP,
    KIND_RUNTYPES,
    ObjectIdentity,
    Payload,
    decode_payload,
    encode_payload,
    format_identity,
    parse_identity,
    payload_digest,
    validate_name,
)

LOG_NAME = "objects.log"
ALIAS_NAME = "aliases.dat"
LOCK_NAME = "LOCK"

MAGIC = 0xC7
REC_OBJECT = 0x01
REC_COMMIT = 0x02
_HEADER_LEN = 6  # magic + type + 4-byte length

RUNTYPES_CLASS = "@runtypes"


@dataclass(frozen=True)
class StoredObject:
    """A committed object: identity plus payload plus bookkeeping."""

    identity: ObjectIdentity
    payload: Payload
    created_at: int
    digest: bytes

    @property
    def kind(self) -> str:
        return self.payload.kind


@dataclass(frozen=True)
class _Snapshot:
    objects: dict
    highs: dict  # (class_name, secondary_key) -> highest config key

    @staticmethod
    def empty() -> "_Snapshot":
        return _Snapshot({}, {})


def _encode_record(rtype: int, body: bytes) -> bytes:
    return (
        bytes((MAGIC, rtype))
        + len(body).to_bytes(4, "big")
        + body
        + (zlib.crc32(body) & 0xFFFFFFFF).to_bytes(4, "big")
    )


def _object_body(obj: StoredObject) -> bytes:
    head = f"{format_identity(obj.identity)}\n{obj.created_at}\n".encode("utf-8")
    return head + encode_payload(obj.payload)


def _decode_object_body(body: bytes, offset: int) -> StoredObject:
    try:
        identity_line, _, rest = body.partition(b"\n")
        stamp_line, _, payload_bytes = rest.partition(b"\n")
        identity = parse_identity(identity_line.decode("utf-8"))
        created_at = int(stamp_line.decode("ascii"))
        payload = decode_payload(payload_bytes)
    except Exception as exc:
        raise CorruptLogError(f"undecodable object record at offset {offset}: {exc}") from exc
    return StoredObject(identity, payload, created_at, payload_digest(payload))


def _scan_log(buf: bytes):
    """Scan a log image into committed transactions.

    Returns ``(transactions, committed_end)`` where ``transactions`` is a
    list of lists of StoredObject and ``committed_end`` is the offset just
    past the last complete transaction.  A truncated tail (including a
    trailing transaction with no commit record) is silently ignored;
    damage before the tail raises ``CorruptLogError``.
    """
    transactions = []
    pending = []
    committed_end = 0
    offset = 0
    size = len(buf)
    while offset < size:
        if size - offset < _HEADER_LEN:
            break  # torn header
        if buf[offset] != MAGIC:
            raise CorruptLogError(f"bad record magic at offset {offset}")
        rtype = buf[offset + 1]
        if rtype not in (REC_OBJECT, REC_COMMIT):
            raise CorruptLogError(f"unknown record type {rtype} at offset {offset}")
        body_len = int.from_bytes(buf[offset + 2 : offset + 6], "big")
        end = offset + _HEADER_LEN + body_len + 4
        if end > size:
            break  # torn body
        body = buf[offset + _HEADER_LEN : offset + _HEADER_LEN + body_len]
        crc = int.from_bytes(buf[end - 4 : end], "big")
        if crc != (zlib.crc32(body) & 0xFFFFFFFF):
            if end == size:
                break  # torn tail record
            raise CorruptLogError(f"CRC mismatch at offset {offset}")
        if rtype == REC_OBJECT:
            pending.append(_decode_object_body(body, offset))
        else:
            try:
                count = int(body.decode("ascii"))
            except ValueError:
                raise CorruptLogError(f"bad commit record at offset {offset}") from None
            if count != len(pending):
                raise CorruptLogError(
                    f"commit record at offset {offset} covers {count} records,"
                    f" found {len(pending)}"
                )
            transactions.append(pending)
            pending = []
            committed_end = end
        offset = end
    return transactions, committed_end


class WriteTransaction:
    """A batch of pending creations, invisible until :meth:`commit`.

    Confined to the thread that called ``Store.begin()``; the store-wide
    writer lock is held for the transaction's whole lifetime.
    """

    def __init__(self, store: "Store"):
        self._store = store
        self.state = "open"
        self.pending: list[StoredObject] = []
        self._by_identity: dict[ObjectIdentity, StoredObject] = {}
        self._local_highs: dict[tuple, int] = {}

    def _require_open(self):
        if self.state != "open":
            raise TransactionClosedError(f"transaction is {self.state}")

    def get_pending(self, identity: ObjectIdentity) -> StoredObject | None:
        return self._by_identity.get(identity)

    def highest_key(self, class_name: str, secondary_key: str | None = None) -> int:
        """Highest config key for a pair, counting staged creations."""
        pair = (class_name, secondary_key)
        return max(
            self._store._snapshot.highs.get(pair, 0), self._local_highs.get(pair, 0)
        )

    def create_object(
        self, class_name: str, secondary_key: str | None, payload: Payload
    ) -> ObjectIdentity:
        """Stage one object; its key continues the pair's dense sequence."""
        self._require_open()
        validate_name(class_name, "class name")
        if secondary_key is not None:
            validate_name(secondary_key, "secondary key")
        if not isinstance(payload, Payload):
            raise InvalidPayloadError(f"not a payload: {payload!r}")
        if payload.kind == KIND_RUNTYPES:
            if class_name != RUNTYPES_CLASS or secondary_key is not None:
                raise InvalidPayloadError(
                    f"run-type payloads live under {RUNTYPES_CLASS!r} with no secondary key"
                )
        elif class_name.startswith("@"):
            raise InvalidPayloadError(f"class names starting with '@' are reserved: {class_name!r}")

        if payload.kind == KIND_MAP:
            for name, target in payload.entries:
                if not self._resolvable(target):
                    raise DanglingLinkError(
                        f"link {name!r} targets missing object {format_identity(target)}",
                        detail=format_identity(target),
                    )
        elif payload.kind == KIND_RUNTYPES:
            for run_type, target in payload.entries:
                bound = self._resolvable(target)
                if bound is None:
                    raise DanglingLinkError(
                        f"run type {run_type!r} binds missing object {format_identity(target)}",
                        detail=format_identity(target),
                    )
                if bound.kind != KIND_MAP:
                    raise NotAMapError(
                        f"run type {run_type!r} must bind a map, got {format_identity(target)}",
                        detail=format_identity(target),
                    )

        pair = (class_name, secondary_key)
        identity = ObjectIdentity(
            class_name, secondary_key, self.highest_key(class_name, secondary_key) + 1
        )
        obj = StoredObject(
            identity, payload, int(self._store._clock()), payload_digest(payload)
        )
        self.pending.append(obj)
        self._by_identity[identity] = obj
        self._local_highs[pair] = identity.config_key
        return identity

    def _resolvable(self, identity: ObjectIdentity) -> StoredObject | None:
        staged = self._by_identity.get(identity)
        if staged is not None:
            return staged
        return self._store._snapshot.objects.get(identity)

    def commit(self):
        """Make all pending creations durable and visible atomically."""
        self._require_open()
        try:
            self._store._commit_transaction(self)
        except BaseException:
            self.state = "aborted"
            self._store._finish_transaction(self)
            raise
        self.state = "committed"
        self._store._finish_transaction(self)

    def abort(self):
        """Discard pending creations; their keys are never consumed."""
        self._require_open()
        self.state = "aborted"
        self._store._finish_transaction(self)


class Store:
    """Handle on one store directory; shareable across reader threads."""

    def __init__(self, directory: str, *, verify_reads: bool = False, clock=time.time):
        self.directory = os.path.abspath(directory)
        os.makedirs(self.directory, exist_ok=True)
        self._log_path = os.path.join(self.directory, LOG_NAME)
        self._alias_path = os.path.join(self.directory, ALIAS_NAME)
        self._verify_reads = verify_reads
        self._clock = clock
        self._writer_lock = threading.RLock()
        self._apply_lock = threading.Lock()
        self._flock_depth = 0
        self._active_txn: WriteTransaction | None = None
        self._snapshot = _Snapshot.empty()
        self._applied_len = 0
        self._lock_fd = None
        self._log_fd = None
        self._lock_fd = os.open(
            os.path.join(self.directory, LOCK_NAME), os.O_CREAT | os.O_RDWR, 0o644
        )
        self._log_fd = os.open(self._log_path, os.O_CREAT | os.O_RDWR | os.O_APPEND, 0o644)
        try:
            with self._exclusive():
                self._recover(truncate=True)
        except BaseException:
            self.close()
            raise

    # -- locking ------------------------------------------------------

    def _acquire_exclusive(self):
        self._writer_lock.acquire()
        if self._flock_depth == 0:
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX)
        self._flock_depth += 1

    def _release_exclusive(self):
        self._flock_depth -= 1
        if self._flock_depth == 0:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
        self._writer_lock.release()

    @contextmanager
    def _exclusive(self):
        self._acquire_exclusive()
        try:
            yield
        finally:
            self._release_exclusive()

    # -- recovery and catch-up ----------------------------------------

    def _apply_transactions(self, transactions, new_applied_len: int):
        objects = dict(self._snapshot.objects)
        highs = dict(self._snapshot.highs)
        for txn_records in transactions:
            for obj in txn_records:
                if obj.identity in objects:
                    raise CorruptLogError(
                        f"duplicate identity in log: {format_identity(obj.identity)}"
                    )
                objects[obj.identity] = obj
                pair = (obj.identity.class_name, obj.identity.secondary_key)
                highs[pair] = max(highs.get(pair, 0), obj.identity.config_key)
        self._snapshot = _Snapshot(objects, highs)
        self._applied_len = max(self._applied_len, new_applied_len)

    def _recover(self, truncate: bool):
        """Replay committed records beyond what is already applied.

        With ``truncate`` (which requires the exclusive lock) a torn or
        uncommitted tail is physically cut off; without it the tail is
        left alone and simply not applied, so a read-side catch-up never
        interferes with an in-flight writer.
        """
        with self._apply_lock:
            size = os.path.getsize(self._log_path)
            if size < self._applied_len:
                raise CorruptLogError("log shrank outside recovery")
            if size == self._applied_len:
                return
            with open(self._log_path, "rb") as f:
                f.seek(self._applied_len)
                tail = f.read()
            transactions, committed_len = _scan_log(tail)
            boundary = self._applied_len + committed_len
            self._apply_transactions(transactions, boundary)
            if truncate and boundary < size:
                with open(self._log_path, "r+b") as f:
                    f.truncate(boundary)
                    f.flush()
                    os.fsync(f.fileno())

    def refresh(self):
        """Pick up transactions committed by other store handles."""
        if os.path.getsize(self._log_path) > self._applied_len:
            self._recover(truncate=False)

    # -- transactions --------------------------------------------------

    def begin(self) -> WriteTransaction:
        """Open the store-wide single write transaction (blocks on peers)."""
        self._acquire_exclusive()
        if self._active_txn is not None:
            self._release_exclusive()
            raise TransactionClosedError("a transaction is already open on this handle")
        try:
            self._recover(truncate=True)
        except BaseException:
            self._release_exclusive()
            raise
        txn = WriteTransaction(self)
        self._active_txn = txn
        return txn

    @contextmanager
    def transaction(self):
        txn = self.begin()
        try:
            yield txn
        except BaseException:
            if txn.state == "open":
                txn.abort()
            raise
        else:
            if txn.state == "open":
                txn.commit()

    def _commit_transaction(self, txn: WriteTransaction):
        if not txn.pending:
            return  # nothing staged: leave the log byte-identical
        chunks = [_encode_record(REC_OBJECT, _object_body(obj)) for obj in txn.pending]
        chunks.append(_encode_record(REC_COMMIT, str(len(txn.pending)).encode("ascii")))
        data = b"".join(chunks)
        # The apply lock spans write-through-publish so a concurrent
        # refresh() can never apply these bytes first.
        with self._apply_lock:
            pre_commit_len = self._applied_len
            try:
                written = 0
                while written < len(data):
                    written += os.write(self._log_fd, data[written:])
                os.fsync(self._log_fd)
            except OSError:
                # Leave the store in its pre-commit state before re-raising.
                with open(self._log_path, "r+b") as f:
                    f.truncate(pre_commit_len)
                    os.fsync(f.fileno())
                raise
            self._apply_transactions([txn.pending], pre_commit_len + len(data))

    def _finish_transaction(self, txn: WriteTransaction):
        if self._active_txn is txn:
            self._active_txn = None
        self._release_exclusive()

    # -- reads ----------------------------------------------------------

    def get_object(self, identity: ObjectIdentity) -> StoredObject:
        """Return the committed object; repeated reads are byte-identical."""
        obj = self._snapshot.objects.get(identity)
        if obj is None:
            raise NotFoundError(
                f"no such object: {format_identity(identity)}",
                detail=format_identity(identity),
            )
        if self._verify_reads and payload_digest(obj.payload) != obj.digest:
            raise CorruptLogError(f"digest mismatch reading {format_identity(identity)}")
        return obj

    def has_object(self, identity: ObjectIdentity) -> bool:
        return identity in self._snapshot.objects

    def list_versions(self, class_name: str, secondary_key: str | None = None) -> list[int]:
        """Dense ascending config keys for one pair; `[]` if unknown."""
        high = self._snapshot.highs.get((class_name, secondary_key), 0)
        return list(range(1, high + 1))

    def object_count(self) -> int:
        return len(self._snapshot.objects)

    def log_size(self) -> int:
        return os.path.getsize(self._log_path)

    # -- alias side region ----------------------------------------------

    def read_alias_region(self) -> str:
        try:
            with open(self._alias_path, "r", encoding="utf-8", newline="") as f:
                return f.read()
        except FileNotFoundError:
            return ""

    def write_alias_region(self, text: str):
        tmp_path = self._alias_path + ".tmp"
        with open(tmp_path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, self._alias_path)
        dir_fd = os.open(self.directory, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    @contextmanager
    def alias_lock(self):
        """Serialize alias read-modify-write through the writer lock."""
        with self._exclusive():
            yield

    # -- lifecycle --------------------------------------------------------

    def close(self):
        if self._log_fd is not None:
            os.close(self._log_fd)
            self._log_fd = None
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc):
        self.close()


def open_store(directory: str, *, verify_reads: bool = False, clock=time.time) -> Store:
    """Open (or create) a store directory, replaying and repairing the log."""
    return Store(directory, verify_reads=verify_reads, clock=clock)
