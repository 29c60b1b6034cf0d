"""In-memory image of the relational JSON tables."""

from __future__ import annotations

import json
from pathlib import Path

TABLES = (
    "attribute",
    "calibrated_sensor",
    "category",
    "ego_pose",
    "instance",
    "log",
    "map",
    "sample",
    "sample_annotation",
    "sample_data",
    "scene",
    "sensor",
    "visibility",
)
EXTRA_TABLES = ("lidarseg",)

# table -> {field: referenced table}; list-valued fields hold several tokens.
FOREIGN_KEYS: dict[str, dict[str, str]] = {
    "calibrated_sensor": {"sensor_token": "sensor"},
    "map": {"log_tokens": "log"},
    "scene": {"log_token": "log", "first_sample_token": "sample", "last_sample_token": "sample"},
    "sample": {"scene_token": "scene", "prev": "sample", "next": "sample"},
    "sample_data": {
        "sample_token": "sample",
        "ego_pose_token": "ego_pose",
        "calibrated_sensor_token": "calibrated_sensor",
        "prev": "sample_data",
        "next": "sample_data",
    },
    "sample_annotation": {
        "sample_token": "sample",
        "instance_token": "instance",
        "visibility_token": "visibility",
        "attribute_tokens": "attribute",
        "prev": "sample_annotation",
        "next": "sample_annotation",
    },
    "instance": {
        "category_token": "category",
        "first_annotation_token": "sample_annotation",
        "last_annotation_token": "sample_annotation",
    },
    "lidarseg": {"sample_data_token": "sample_data"},
}
NULLABLE = {"prev", "next"}


class DuplicateTokenError(ValueError):
    pass


class RelationalDB:
    def __init__(self) -> None:
        self.tables: dict[str, list[dict]] = {name: [] for name in (*TABLES, *EXTRA_TABLES)}
        self._index: dict[str, dict[str, dict]] = {name: {} for name in self.tables}

    def insert(self, table: str, row: dict) -> dict:
        tok = row["token"]
        if tok in self._index[table]:
            raise DuplicateTokenError(f"{table}: token {tok} already present")
        self.tables[table].append(row)
        self._index[table][tok] = row
        return row

    def get(self, table: str, token: str) -> dict:
        return self._index[table][token]

    def has(self, table: str, token: str) -> bool:
        return token in self._index[table]

    def __len__(self) -> int:
        return sum(len(rows) for rows in self.tables.values())

    def all_tokens(self) -> list[str]:
        return [r["token"] for rows in self.tables.values() for r in rows]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, rows in self.tables.items():
            with (directory / f"{name}.json").open("w") as fh:
                json.dump(rows, fh, indent=1, sort_keys=True)
                fh.write("\n")

    @classmethod
    def load(cls, directory, strict: bool = True) -> "RelationalDB":
        """Read every table file; with ``strict=False`` duplicates are kept in
        ``tables`` (first one indexed) so a validator can report them."""
        db = cls()
        for name in db.tables:
            path = Path(directory) / f"{name}.json"
            if not path.exists():
                continue
            rows = json.loads(path.read_text())
            for row in rows:
                if strict:
                    db.insert(name, row)
                else:
                    db.tables[name].append(row)
                    db._index[name].setdefault(row.get("token"), row)
        return db
