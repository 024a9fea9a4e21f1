import pytest

from flowforge.catalog import ArtifactKind, list_artifacts
from flowforge.retrieval import (
    StaleIndexError,
    build_index,
    load_index,
    query,
    save_index,
)


class TestBuild:
    def test_step_vocabulary_covers_names_and_descriptions(self, catalog, index):
        sub = index.sub_for(ArtifactKind.STEP_NAME, "")
        vocab = set(sub.idf)
        for step in catalog.steps.values():
            assert "w:" + step.name.split("_")[0].lower() in vocab

    def test_empty_column_scope_queries_return_empty(self, index):
        ranked = query(index, ArtifactKind.COLUMN_NAME, "anything", scope="no_such_table")
        assert ranked.choices == ()

    def test_rebuild_carries_new_version(self, catalog):
        import flowforge
        from flowforge.catalog import load_catalog

        fresh = load_catalog(flowforge.demo_catalog_dir())
        idx = build_index(fresh)
        assert idx.catalog_version == fresh.version
        assert idx.catalog_version != catalog.version

    def test_stale_index_detected(self, catalog, index):
        import flowforge
        from flowforge.catalog import load_catalog

        fresh = load_catalog(flowforge.demo_catalog_dir())
        with pytest.raises(StaleIndexError):
            query(
                index,
                ArtifactKind.STEP_NAME,
                "anything",
                current_catalog=fresh,
            )
        ranked = query(index, ArtifactKind.STEP_NAME, "x", current_catalog=catalog)
        assert ranked.kind is ArtifactKind.STEP_NAME


class TestQuery:
    def test_exact_name_rank_one_every_artifact(self, catalog, index):
        for doc in list_artifacts(catalog, ArtifactKind.STEP_NAME):
            ranked = query(index, ArtifactKind.STEP_NAME, doc.payload, k=4)
            assert ranked.choices[0].payload == doc.payload
            assert ranked.choices[0].score == 1.0
        for doc in list_artifacts(catalog, ArtifactKind.TABLE_NAME):
            ranked = query(index, ArtifactKind.TABLE_NAME, doc.payload, k=4)
            assert ranked.choices[0].payload == doc.payload
        for table in catalog.tables:
            for doc in list_artifacts(catalog, ArtifactKind.COLUMN_NAME, table):
                ranked = query(index, ArtifactKind.COLUMN_NAME, doc.payload, k=4, scope=table)
                assert ranked.choices[0].payload == doc.payload

    def test_membership_send_email(self, index):
        ranked = query(
            index, ArtifactKind.STEP_NAME, "send an email reminding them of the incident"
        )
        assert "send_email" in ranked.payloads

    def test_membership_assigned_to(self, index):
        ranked = query(
            index,
            ArtifactKind.COLUMN_NAME,
            "do not have any assignees",
            scope="incident_task",
        )
        assert "assigned_to" in ranked.payloads

    def test_scores_bounded_and_sorted(self, index):
        ranked = query(index, ArtifactKind.STEP_NAME, "look up the user", k=10)
        scores = [c.score for c in ranked.choices]
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores == sorted(scores, reverse=True)
        assert len(ranked.choices) <= 10

    def test_no_duplicate_payloads(self, index):
        ranked = query(index, ArtifactKind.STEP_NAME, "record", k=50)
        assert len(set(ranked.payloads)) == len(ranked.payloads)

    def test_determinism(self, index):
        a = query(index, ArtifactKind.TABLE_NAME, "incident tasks without assignee")
        b = query(index, ArtifactKind.TABLE_NAME, "incident tasks without assignee")
        assert a == b

    def test_k_validation(self, index):
        with pytest.raises(ValueError):
            query(index, ArtifactKind.STEP_NAME, "x", k=0)

    def test_scope_required_for_columns(self, index):
        with pytest.raises(ValueError):
            query(index, ArtifactKind.COLUMN_NAME, "state")

    def test_table_scoped_values_get_conjunct_payloads(self, index):
        ranked = query(index, ArtifactKind.COLUMN_VALUE, "close them", scope="incident_task")
        assert ranked.choices[0].payload == "state=3"

    def test_column_scoped_values_get_bare_payloads(self, index):
        ranked = query(
            index, ArtifactKind.COLUMN_VALUE, "close them", scope="incident_task.state"
        )
        assert ranked.choices[0].payload == "3"


class TestPersistence:
    def test_round_trip(self, catalog, index, tmp_path):
        path = tmp_path / f"{index.catalog_version}.idx"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.catalog_version == index.catalog_version
        assert loaded.fingerprint == index.fingerprint
        a = query(index, ArtifactKind.STEP_NAME, "send an email to the manager")
        b = query(loaded, ArtifactKind.STEP_NAME, "send an email to the manager")
        assert a == b
