"""Tree navigation and activation.

A configuration tree is whatever is reachable from a root map; the
tree's identity *is* the root map's identity.  Objects are found by path
(link names joined with ``/``).  The reserved ``@runtypes`` class holds
the run-type map: each version carries a complete run-type -> tree-root
binding set, and the version with the highest config key is the active
one.  Older versions stay readable forever, which is what makes any
historical configuration reconstructible.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    DepthExceededError,
    NoActiveMapError,
    NoSuchLinkError,
    NotAMapError,
    UnknownRunTypeError,
)
from .model import (
    KIND_MAP,
    ObjectIdentity,
    Payload,
    display_path,
    format_identity,
    parse_path,
    path_text,
)
from .store import RUNTYPES_CLASS, Store, StoredObject, WriteTransaction

# Legitimate trees are a few levels deep; the cap only guards against
# walking a store corrupted outside this library (the create-time
# referential-integrity check makes cycles unbuildable through the API).
MAX_TREE_DEPTH = 64


def lookup_path(store: Store, root: ObjectIdentity, path) -> StoredObject:
    """Follow named links from ``root``; the empty path is the root itself."""
    segments = parse_path(path)
    current = store.get_object(root)
    if current.kind != KIND_MAP:
        raise NotAMapError(
            f"{format_identity(root)} is not a map", detail=format_identity(root)
        )
    for depth, segment in enumerate(segments):
        prefix = display_path(segments[:depth])
        if current.kind != KIND_MAP:
            raise NotAMapError(f"{prefix!r} is not a map", detail=prefix)
        try:
            target = current.payload.get(segment)
        except KeyError:
            raise NoSuchLinkError(
                f"no link {segment!r} under {prefix!r}", detail=prefix
            ) from None
        current = store.get_object(target)
    return current


@dataclass(frozen=True)
class TreeManifest:
    """Deterministic depth-first listing of (path text, identity) pairs.

    Paths are the keys: a sub-tree shared through two links appears once
    per path.  The root's path is the empty string ("/" when rendered).
    """

    root: ObjectIdentity
    entries: tuple

    def to_text(self) -> str:
        lines = [
            f"{display_path(path)}\t{format_identity(identity)}"
            for path, identity in self.entries
        ]
        return "\n".join(lines) + "\n"


def walk_tree(store: Store, root: ObjectIdentity) -> TreeManifest:
    """Expand the whole tree under ``root`` into a manifest."""
    entries = []

    def visit(identity: ObjectIdentity, segments: tuple, depth: int):
        if depth > MAX_TREE_DEPTH:
            raise DepthExceededError(
                f"tree deeper than {MAX_TREE_DEPTH} at {display_path(segments)!r}"
            )
        obj = store.get_object(identity)
        entries.append((path_text(segments), identity))
        if obj.kind == KIND_MAP:
            for name, target in obj.payload.entries:
                visit(target, segments + (name,), depth + 1)

    root_obj = store.get_object(root)
    if root_obj.kind != KIND_MAP:
        raise NotAMapError(
            f"{format_identity(root)} is not a map", detail=format_identity(root)
        )
    visit(root, (), 0)
    return TreeManifest(root, tuple(entries))


def activate(store: Store, txn: WriteTransaction, bindings: dict) -> ObjectIdentity:
    """Write a new run-type map version carrying the complete binding set.

    The new version's key supersedes all prior ones; target maps must
    already exist (checked at creation, along with their kind).
    """
    payload = Payload.runtypes(bindings)
    return txn.create_object(RUNTYPES_CLASS, None, payload)


def _active_runtype_map(store: Store) -> StoredObject | None:
    keys = store.list_versions(RUNTYPES_CLASS, None)
    if not keys:
        return None
    return store.get_object(ObjectIdentity(RUNTYPES_CLASS, None, keys[-1]))


def active_trees(store: Store) -> dict:
    """Bindings of the highest-key run-type map; empty when none exists."""
    active = _active_runtype_map(store)
    if active is None:
        return {}
    return active.payload.bindings


def resolve_run_type(store: Store, run_type: str) -> ObjectIdentity:
    """Map a run type to its active tree root via the highest-key run-type map."""
    active = _active_runtype_map(store)
    if active is None:
        raise NoActiveMapError("no run-type map has been activated")
    try:
        return active.payload.get(run_type)
    except KeyError:
        raise UnknownRunTypeError(
            f"run type {run_type!r} is not bound", detail=run_type
        ) from None
