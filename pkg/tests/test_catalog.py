import pytest

import flowforge
from flowforge.catalog import (
    ArtifactKind,
    CatalogSyntaxError,
    DanglingReferenceError,
    DuplicateArtifactError,
    UnknownTableError,
    ValueKind,
    list_artifacts,
    load_catalog,
)


def _write_catalog(tmp_path, steps: dict[str, str], tables: dict[str, str]):
    (tmp_path / "steps").mkdir()
    (tmp_path / "tables").mkdir()
    for name, body in steps.items():
        (tmp_path / "steps" / name).write_text(body)
    for name, body in tables.items():
        (tmp_path / "tables" / name).write_text(body)
    return tmp_path


MINIMAL_STEP = """\
- name: log_message
  description: Write a message to the system log
  inputs:
  - name: message
    kind: text
    required: true
"""

MINIMAL_TABLE = """\
name: incident
label: Incident
columns:
- name: state
  label: State
"""


class TestLoad:
    def test_demo_catalog_cardinalities(self, catalog):
        assert len(catalog.steps) >= 12
        assert len(catalog.tables) >= 6
        for name in ("look_up_record", "send_email", "IF", "update_record", "create_record"):
            assert name in catalog.steps
        for name in ("incident", "sys_user", "incident_task"):
            assert name in catalog.tables

    def test_declarations(self, catalog):
        look_up = catalog.step("look_up_record")
        assert look_up.input_decl("table").kind is ValueKind.TABLE
        assert look_up.input_decl("table").required
        assert "record" in look_up.output_names
        assert catalog.step("IF").flow_control

    def test_empty_steps_file(self, tmp_path):
        _write_catalog(tmp_path, {"empty.yaml": ""}, {"incident.yaml": MINIMAL_TABLE})
        with pytest.raises(CatalogSyntaxError):
            load_catalog(tmp_path)

    def test_duplicate_table(self, tmp_path):
        _write_catalog(
            tmp_path,
            {"steps.yaml": MINIMAL_STEP},
            {"a.yaml": MINIMAL_TABLE, "b.yaml": MINIMAL_TABLE},
        )
        with pytest.raises(DuplicateArtifactError):
            load_catalog(tmp_path)

    def test_dangling_condition_input(self, tmp_path):
        bad_step = """\
- name: orphan_condition
  inputs:
  - name: condition
    kind: condition
    required: true
"""
        _write_catalog(tmp_path, {"steps.yaml": bad_step}, {"incident.yaml": MINIMAL_TABLE})
        with pytest.raises(DanglingReferenceError):
            load_catalog(tmp_path)

    def test_version_increments_on_reload(self):
        first = load_catalog(flowforge.demo_catalog_dir())
        second = load_catalog(flowforge.demo_catalog_dir())
        assert second.version > first.version
        assert second.fingerprint == first.fingerprint


class TestListArtifacts:
    def test_step_names_sorted(self, catalog):
        docs = list_artifacts(catalog, ArtifactKind.STEP_NAME)
        payloads = [d.payload for d in docs]
        assert payloads == sorted(payloads)
        assert set(payloads) == set(catalog.steps)

    def test_column_scope(self, catalog):
        docs = list_artifacts(catalog, ArtifactKind.COLUMN_NAME, scope="incident")
        assert {d.payload for d in docs} == {c.name for c in catalog.table("incident").columns}
        assert all(d.table == "incident" for d in docs)

    def test_column_scope_required(self, catalog):
        with pytest.raises(UnknownTableError):
            list_artifacts(catalog, ArtifactKind.COLUMN_VALUE)

    def test_unknown_scope(self, catalog):
        with pytest.raises(UnknownTableError):
            list_artifacts(catalog, ArtifactKind.COLUMN_NAME, scope="userz")

    def test_column_values_scoped_to_column(self, catalog):
        docs = list_artifacts(catalog, ArtifactKind.COLUMN_VALUE, scope="incident_task.state")
        assert [d.payload for d in docs] == ["1", "2", "3"]
        assert all(d.column == "state" for d in docs)

    def test_stable_across_calls(self, catalog):
        a = list_artifacts(catalog, ArtifactKind.TABLE_NAME)
        b = list_artifacts(catalog, ArtifactKind.TABLE_NAME)
        assert a == b
