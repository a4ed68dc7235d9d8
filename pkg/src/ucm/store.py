"""File-per-session JSON persistence with atomic writes and quarantine."""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

from ucm.pipeline import Session, session_from_dict, session_to_dict

E_IO = "E-IO"
E_CORRUPT = "E-CORRUPT"
E_NOT_FOUND = "E-NOT-FOUND"

_SAFE_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class SessionNotFound(StoreError):
    def __init__(self, session_id: str):
        super().__init__(E_NOT_FOUND, f"no session {session_id!r}")


class CorruptSessionError(StoreError):
    def __init__(self, session_id: str, quarantine_path: Path):
        self.quarantine_path = quarantine_path
        super().__init__(
            E_CORRUPT,
            f"session file for {session_id!r} is unreadable; moved to {quarantine_path}",
        )


def _check_id(session_id: str) -> None:
    if not _SAFE_ID_RE.match(session_id):
        raise StoreError(E_IO, f"unsafe session id {session_id!r}")


class SessionStore:
    """One JSON file per session under data_dir; writes are temp-then-rename."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        try:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(E_IO, f"cannot create data dir {self.data_dir}: {exc}") from exc

    def path(self, session_id: str) -> Path:
        _check_id(session_id)
        return self.data_dir / f"{session_id}.json"

    def save(self, session: Session) -> Path:
        path = self.path(session.id)
        tmp = path.with_suffix(".json.tmp")
        try:
            tmp.write_text(
                json.dumps(session_to_dict(session), indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreError(E_IO, f"cannot write {path}: {exc}") from exc
        return path

    def load(self, session_id: str) -> Session:
        path = self.path(session_id)
        if not path.exists():
            raise SessionNotFound(session_id)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StoreError(E_IO, f"cannot read {path}: {exc}") from exc
        try:
            return session_from_dict(json.loads(text))
        except (ValueError, KeyError, TypeError):
            quarantine = self._quarantine(path)
            raise CorruptSessionError(session_id, quarantine) from None

    def _quarantine(self, path: Path) -> Path:
        """Move an unreadable file aside; never delete it."""
        quarantine_dir = self.data_dir / ".quarantine"
        quarantine_dir.mkdir(exist_ok=True)
        target = quarantine_dir / path.name
        counter = 1
        while target.exists():
            target = quarantine_dir / f"{path.stem}.{counter}{path.suffix}"
            counter += 1
        os.replace(path, target)
        return target

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.json"))

    def exists(self, session_id: str) -> bool:
        return self.path(session_id).exists()
