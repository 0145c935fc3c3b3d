"""Database schema model: column types, table definitions, key constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, ResolutionError

COLUMN_KINDS = ("int", "string", "bool", "timestamp")

# Kinds whose values carry a natural order usable by < atoms.
ORDERED_KINDS = ("int", "timestamp")


@dataclass(frozen=True)
class ColumnDef:
    name: str
    kind: str  # one of COLUMN_KINDS
    nullable: bool


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...]
    unique_keys: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ParseError(f"table {self.name}: duplicate column names")
        if not self.primary_key:
            raise ParseError(f"table {self.name}: primary key must be non-empty")
        for key in (self.primary_key, *self.unique_keys):
            for col in key:
                if col not in names:
                    raise ParseError(f"table {self.name}: key column {col} does not exist")
        for col in self.columns:
            if col.name in self.primary_key and col.nullable:
                raise ParseError(f"table {self.name}: primary-key column {col.name} must be non-nullable")

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise ResolutionError(f"table {self.name} has no column {name}")

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise ResolutionError(f"table {self.name} has no column {name}")

    @property
    def keys(self) -> tuple[tuple[str, ...], ...]:
        return (self.primary_key, *self.unique_keys)


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise ResolutionError(f"unknown table {name}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)


def value_kind(value: object) -> str:
    """Provisional kind of a Python literal before column-type unification."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, str):
        return "string"
    raise ParseError(f"unsupported constant {value!r}")


def kinds_compatible(kind: str, column_kind: str) -> bool:
    """A literal of provisional `kind` may inhabit a column of `column_kind`.

    String literals double as timestamps; integer literals double as
    timestamps too so that desk-scale pools can order them numerically.
    """
    if kind == "null":
        return True
    if kind == column_kind:
        return True
    if column_kind == "timestamp" and kind in ("string", "int"):
        return True
    return False
