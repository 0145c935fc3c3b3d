"""Shared fixtures: the calendar policy from the running example."""

from __future__ import annotations

import pytest

from viewfence.policy import PolicyBundle, loads_policy

CALENDAR_POLICY = {
    "format_version": 1,
    "tables": [
        {
            "name": "Users",
            "columns": [
                {"name": "UId", "type": "int"},
                {"name": "Name", "type": "string"},
            ],
            "primary_key": ["UId"],
        },
        {
            "name": "Events",
            "columns": [
                {"name": "EId", "type": "int"},
                {"name": "Title", "type": "string"},
                {"name": "Duration", "type": "int"},
            ],
            "primary_key": ["EId"],
        },
        {
            "name": "Attendances",
            "columns": [
                {"name": "UId", "type": "int"},
                {"name": "EId", "type": "int"},
                {"name": "ConfirmedAt", "type": "timestamp"},
            ],
            "primary_key": ["UId", "EId"],
        },
    ],
    "constraints": [],
    "views": [
        {"name": "V1", "sql": "SELECT * FROM Users"},
        {"name": "V2", "sql": "SELECT * FROM Attendances WHERE UId = ?MyUId"},
        {
            "name": "V3",
            "sql": "SELECT * FROM Events WHERE EId IN "
            "(SELECT EId FROM Attendances WHERE UId = ?MyUId)",
        },
        {
            "name": "V4",
            "sql": "SELECT * FROM Attendances WHERE EId IN "
            "(SELECT EId FROM Attendances WHERE UId = ?MyUId)",
        },
    ],
    "context": [{"name": "MyUId", "type": "int"}],
}


@pytest.fixture(scope="session")
def calendar() -> PolicyBundle:
    return loads_policy(CALENDAR_POLICY)
