"""File persistence: atomic save/load round trip, quarantine of corrupt files."""

from __future__ import annotations

import pytest

from conftest import make_engine
from ucm.model import RequirementsDoc
from ucm.store import CorruptSessionError, SessionNotFound, SessionStore, StoreError

DOC = RequirementsDoc(id="r1", title="Desk", text="Agents resolve tickets.")


def fresh_session(prefix: str = "sess"):
    from conftest import sequential_ids

    engine, _ = make_engine(
        ['```json\n[{"name": "Agent"}]\n```'], session_ids=sequential_ids(prefix)
    )
    session = engine.start_session(DOC)
    engine.run_actor_stage(session)
    return session


def test_save_then_load_round_trip(tmp_path):
    store = SessionStore(tmp_path)
    session = fresh_session()
    store.save(session)
    assert store.load(session.id) == session


def test_load_unknown_id(tmp_path):
    store = SessionStore(tmp_path)
    with pytest.raises(SessionNotFound) as exc:
        store.load("nope")
    assert exc.value.code == "E-NOT-FOUND"


def test_truncated_file_quarantined_not_deleted(tmp_path):
    store = SessionStore(tmp_path)
    session = fresh_session()
    path = store.save(session)
    path.write_text(path.read_text("utf-8")[:40], "utf-8")
    with pytest.raises(CorruptSessionError) as exc:
        store.load(session.id)
    assert exc.value.code == "E-CORRUPT"
    assert not path.exists()
    quarantined = tmp_path / ".quarantine" / f"{session.id}.json"
    assert quarantined.exists()
    assert len(quarantined.read_text("utf-8")) == 40


def test_unsafe_id_rejected(tmp_path):
    store = SessionStore(tmp_path)
    with pytest.raises(StoreError):
        store.path("../escape")


def test_list_ids_sorted(tmp_path):
    store = SessionStore(tmp_path)
    first = fresh_session("alpha")
    second = fresh_session("beta")
    store.save(second)
    store.save(first)
    assert store.list_ids() == sorted([first.id, second.id])
