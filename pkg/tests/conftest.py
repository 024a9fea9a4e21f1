from __future__ import annotations

import pytest

import flowforge
from flowforge.catalog import load_catalog

FIG3_REQUIREMENT = (
    "When a P1 incident is created, look up the user assigned to the incident "
    "and if the user has a manager, send an email reminding them of the incident"
)

FIG3_DOC = """\
requirement: When a P1 incident is created, look up the user assigned to the incident and if the user has a manager, send an email reminding them of the incident
trigger:
  table: incident
  event: created
  condition: priority=1
steps:
- name: look_up_record
  annotation: look up the user assigned to the incident
  order: 1
  inputs:
  - name: table
    value: sys_user
  - name: condition
    value: sys_id={{trigger.record.assigned_to}}
- name: IF
  annotation: if the user has a manager
  order: 2
  inputs:
  - name: record
    value: '{{1.record}}'
  - name: condition
    value: managerISNOTEMPTY
- name: send_email
  annotation: send an email reminding them of the incident
  order: 3
  block: 2
  inputs:
  - name: to
    value: '{{1.record.manager}}'
  - name: subject
    value: Incident reminder
  - name: body
    value: Please remind {{1.record.name}} about incident {{trigger.record.number}}
"""


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(flowforge.demo_catalog_dir())


@pytest.fixture(scope="session")
def index(catalog):
    from flowforge.retrieval import build_index

    return build_index(catalog)


@pytest.fixture(scope="session")
def corpus():
    from flowforge.dataset import load_corpus

    return load_corpus(flowforge.demo_corpus_dir())


@pytest.fixture()
def fig3_workflow():
    from flowforge.dsl import parse_workflow

    return parse_workflow(FIG3_DOC)
