"""Environment catalog: the installation's building blocks.

Holds the step definitions (with declared inputs and outputs), tables,
columns, and enum-coded column values that workflows are grounded in. The
catalog is loaded from a directory of YAML files and is immutable after
load; a reload produces a new value with a fresh version tag.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import yaml


class ArtifactKind(str, Enum):
    STEP_NAME = "step_name"
    TABLE_NAME = "table_name"
    COLUMN_NAME = "column_name"
    COLUMN_VALUE = "column_value"


class ValueKind(str, Enum):
    TEXT = "text"
    TABLE = "table"
    COLUMN = "column"
    CONDITION = "condition"
    REFERENCE = "reference"
    EMAIL_BODY = "email_body"


class CatalogError(Exception):
    pass


class CatalogSyntaxError(CatalogError):
    def __init__(self, path: Path | str, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class DuplicateArtifactError(CatalogError):
    pass


class DanglingReferenceError(CatalogError):
    pass


class UnknownTableError(CatalogError):
    pass


@dataclass(frozen=True)
class InputDecl:
    name: str
    kind: ValueKind
    required: bool = False


@dataclass(frozen=True)
class OutputDecl:
    name: str
    path_schema: str = ""


@dataclass(frozen=True)
class StepDefinition:
    name: str
    description: str = ""
    inputs: tuple[InputDecl, ...] = ()
    outputs: tuple[OutputDecl, ...] = ()
    flow_control: bool = False

    def __post_init__(self) -> None:
        names = [i.name for i in self.inputs]
        if len(names) != len(set(names)):
            raise CatalogError(f"step {self.name}: duplicate input names")
        outs = [o.name for o in self.outputs]
        if len(outs) != len(set(outs)):
            raise CatalogError(f"step {self.name}: duplicate output names")

    def input_decl(self, name: str) -> InputDecl | None:
        for decl in self.inputs:
            if decl.name == name:
                return decl
        return None

    @property
    def output_names(self) -> frozenset[str]:
        return frozenset(o.name for o in self.outputs)


@dataclass(frozen=True)
class ValueOption:
    value: str
    label: str = ""


@dataclass(frozen=True)
class ColumnDef:
    name: str
    label: str = ""
    values: tuple[ValueOption, ...] = ()

    def __post_init__(self) -> None:
        stored = [v.value for v in self.values]
        if len(stored) != len(set(stored)):
            raise CatalogError(f"column {self.name}: duplicate enum values")


@dataclass(frozen=True)
class TableSchema:
    name: str
    label: str = ""
    columns: tuple[ColumnDef, ...] = ()

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise CatalogError(f"table {self.name}: duplicate column names")

    def column(self, name: str) -> ColumnDef | None:
        for col in self.columns:
            if col.name == name:
                return col
        return None


@dataclass(frozen=True)
class ArtifactDoc:
    """One indexable artifact: surface text for matching plus the exact
    payload string a generator may emit."""

    id: str
    kind: ArtifactKind
    text: str
    payload: str
    table: str | None = None
    column: str | None = None


@dataclass(frozen=True)
class EnvironmentCatalog:
    steps: dict[str, StepDefinition]
    tables: dict[str, TableSchema]
    version: int
    fingerprint: str

    def step(self, name: str) -> StepDefinition | None:
        return self.steps.get(name)

    def table(self, name: str) -> TableSchema | None:
        return self.tables.get(name)


_version_counter = itertools.count(1)
_version_lock = threading.Lock()


def _next_version() -> int:
    with _version_lock:
        return next(_version_counter)


def _load_yaml_docs(path: Path) -> list[dict]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise CatalogSyntaxError(path, f"invalid YAML: {exc}") from exc
    if data is None:
        raise CatalogSyntaxError(path, "empty catalog file")
    docs = data if isinstance(data, list) else [data]
    for doc in docs:
        if not isinstance(doc, dict):
            raise CatalogSyntaxError(path, "expected a mapping or list of mappings")
    return docs


def _require(doc: dict, key: str, path: Path) -> object:
    if key not in doc:
        raise CatalogSyntaxError(path, f"missing key {key!r}")
    return doc[key]


def _parse_step_def(doc: dict, path: Path) -> StepDefinition:
    name = str(_require(doc, "name", path))
    inputs = []
    for item in doc.get("inputs", []) or []:
        try:
            kind = ValueKind(str(_require(item, "kind", path)))
        except ValueError:
            raise CatalogSyntaxError(path, f"unknown input kind {item.get('kind')!r}")
        inputs.append(
            InputDecl(
                name=str(_require(item, "name", path)),
                kind=kind,
                required=bool(item.get("required", False)),
            )
        )
    outputs = [
        OutputDecl(name=str(_require(item, "name", path)), path_schema=str(item.get("path_schema", "")))
        for item in doc.get("outputs", []) or []
    ]
    try:
        step = StepDefinition(
            name=name,
            description=str(doc.get("description", "")),
            inputs=tuple(inputs),
            outputs=tuple(outputs),
            flow_control=bool(doc.get("flow_control", False)),
        )
    except CatalogError as exc:
        raise CatalogSyntaxError(path, str(exc)) from exc
    if step.name.startswith("look_up") and not step.outputs:
        raise CatalogSyntaxError(path, f"lookup step {name} must declare an output")
    return step


def _parse_table(doc: dict, path: Path) -> TableSchema:
    columns = []
    for item in doc.get("columns", []) or []:
        values = tuple(
            ValueOption(value=str(v["value"]), label=str(v.get("label", "")))
            for v in item.get("values", []) or []
        )
        columns.append(
            ColumnDef(
                name=str(_require(item, "name", path)),
                label=str(item.get("label", "")),
                values=values,
            )
        )
    try:
        return TableSchema(
            name=str(_require(doc, "name", path)),
            label=str(doc.get("label", "")),
            columns=tuple(columns),
        )
    except CatalogError as exc:
        raise CatalogSyntaxError(path, str(exc)) from exc


def _check_cross_links(steps: dict[str, StepDefinition]) -> None:
    # A step that declares column/condition/value inputs needs some way to
    # resolve a table context: a sibling table or reference input.
    for step in steps.values():
        kinds = {decl.kind for decl in step.inputs}
        if kinds & {ValueKind.COLUMN, ValueKind.CONDITION}:
            if not kinds & {ValueKind.TABLE, ValueKind.REFERENCE}:
                raise DanglingReferenceError(
                    f"step {step.name}: column/condition input without a "
                    "table or reference input to scope it"
                )


def catalog_fingerprint(source: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(source.rglob("*.yaml")):
        digest.update(str(path.relative_to(source)).encode())
        digest.update(b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()


def load_catalog(source: str | Path) -> EnvironmentCatalog:
    """Load a catalog directory (``steps/*.yaml`` and ``tables/*.yaml``)."""
    root = Path(source)
    steps_dir, tables_dir = root / "steps", root / "tables"
    if not steps_dir.is_dir() or not tables_dir.is_dir():
        raise CatalogSyntaxError(root, "catalog needs steps/ and tables/ directories")

    steps: dict[str, StepDefinition] = {}
    for path in sorted(steps_dir.glob("*.yaml")):
        for doc in _load_yaml_docs(path):
            step = _parse_step_def(doc, path)
            if step.name in steps:
                raise DuplicateArtifactError(f"duplicate step {step.name!r}")
            steps[step.name] = step

    tables: dict[str, TableSchema] = {}
    for path in sorted(tables_dir.glob("*.yaml")):
        for doc in _load_yaml_docs(path):
            table = _parse_table(doc, path)
            if table.name in tables:
                raise DuplicateArtifactError(f"duplicate table {table.name!r}")
            tables[table.name] = table

    if not steps:
        raise CatalogSyntaxError(steps_dir, "no step definitions found")
    _check_cross_links(steps)
    return EnvironmentCatalog(
        steps=steps,
        tables=tables,
        version=_next_version(),
        fingerprint=catalog_fingerprint(root),
    )


def _surface(*parts: str) -> str:
    return " ".join(p for p in parts if p)


def list_artifacts(
    catalog: EnvironmentCatalog, kind: ArtifactKind, scope: str | None = None
) -> list[ArtifactDoc]:
    """Enumerate artifacts of one kind, name-sorted.

    ``scope`` is required for column kinds: a table name for COLUMN_NAME,
    a table name or ``table.column`` for COLUMN_VALUE.
    """
    if kind is ArtifactKind.STEP_NAME:
        return [
            ArtifactDoc(
                id=f"step:{s.name}",
                kind=kind,
                text=_surface(s.name, s.description),
                payload=s.name,
            )
            for s in sorted(catalog.steps.values(), key=lambda s: s.name)
        ]
    if kind is ArtifactKind.TABLE_NAME:
        return [
            ArtifactDoc(
                id=f"table:{t.name}",
                kind=kind,
                text=_surface(t.name, t.label),
                payload=t.name,
            )
            for t in sorted(catalog.tables.values(), key=lambda t: t.name)
        ]
    if scope is None:
        raise UnknownTableError(f"{kind.value} listing requires a table scope")
    table_name, _, column_name = scope.partition(".")
    table = catalog.table(table_name)
    if table is None:
        raise UnknownTableError(f"unknown table {table_name!r}")
    if kind is ArtifactKind.COLUMN_NAME:
        return [
            ArtifactDoc(
                id=f"column:{table.name}.{c.name}",
                kind=kind,
                text=_surface(c.name, c.label),
                payload=c.name,
                table=table.name,
                column=c.name,
            )
            for c in sorted(table.columns, key=lambda c: c.name)
        ]
    docs = []
    for col in sorted(table.columns, key=lambda c: c.name):
        if column_name and col.name != column_name:
            continue
        for opt in col.values:
            docs.append(
                ArtifactDoc(
                    id=f"value:{table.name}.{col.name}={opt.value}",
                    kind=kind,
                    text=_surface(opt.value, opt.label, col.name, col.label),
                    payload=opt.value,
                    table=table.name,
                    column=col.name,
                )
            )
    if column_name and table.column(column_name) is None:
        raise UnknownTableError(f"unknown column {scope!r}")
    return docs
