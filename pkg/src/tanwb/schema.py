"""Variable schema for categorical case records.

A schema is an ordered list of categorical variables, each with a fixed
ordered state list and a role. Exactly one variable carries the ``class``
role; the rest are features. A state literally named ``"missing"`` is an
ordinary state like any other.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Union

from .errors import SchemaError

ROLE_DEMOGRAPHIC = "demographic"
ROLE_IMAGING = "imaging"
ROLE_CLASS = "class"
ROLES = (ROLE_DEMOGRAPHIC, ROLE_IMAGING, ROLE_CLASS)

MISSING_STATE = "missing"


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    role: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SchemaError(f"variable {self.name!r}: unknown role {self.role!r}")
        if len(self.states) < 2:
            raise SchemaError(f"variable {self.name!r}: needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise SchemaError(f"variable {self.name!r}: duplicate states")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise SchemaError(
                f"variable {self.name!r}: unknown state {label!r}"
            ) from None

    @property
    def missing_index(self) -> int | None:
        """Index of the declared "missing" state, if the variable has one."""
        try:
            return self.states.index(MISSING_STATE)
        except ValueError:
            return None


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]
    class_variable_name: str

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate variable names: {dup}")
        class_vars = [v for v in self.variables if v.role == ROLE_CLASS]
        if len(class_vars) != 1:
            raise SchemaError(
                f"schema must declare exactly one class variable, found {len(class_vars)}"
            )
        if class_vars[0].name != self.class_variable_name:
            raise SchemaError(
                f"class_variable names {self.class_variable_name!r} but the "
                f"variable with role 'class' is {class_vars[0].name!r}"
            )

    @property
    def features(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.role != ROLE_CLASS)

    @property
    def class_variable(self) -> Variable:
        return next(v for v in self.variables if v.role == ROLE_CLASS)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def feature_index(self, name: str) -> int:
        for i, v in enumerate(self.features):
            if v.name == name:
                return i
        raise SchemaError(f"unknown feature variable {name!r}")

    @property
    def age_group_variable(self) -> Variable | None:
        """The demographic age-group variable, when the schema declares one."""
        for v in self.features:
            if v.name == "Age Group":
                return v
        return None

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "states": list(v.states), "role": v.role}
                for v in self.variables
            ],
            "class_variable": self.class_variable_name,
        }


def schema_hash(schema: Schema) -> str:
    """Stable content hash of the schema, used for model provenance."""
    blob = json.dumps(schema.to_dict(), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(blob.encode("utf-8")).hexdigest()


def schema_from_dict(doc: dict) -> Schema:
    try:
        raw_vars = doc["variables"]
        class_name = doc["class_variable"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"schema document missing field: {exc}") from None
    variables = []
    for raw in raw_vars:
        try:
            variables.append(
                Variable(
                    name=raw["name"],
                    states=tuple(raw["states"]),
                    role=raw["role"],
                )
            )
        except KeyError as exc:
            raise SchemaError(f"schema variable entry missing field: {exc}") from None
    return Schema(variables=tuple(variables), class_variable_name=class_name)


def load_schema(source: Union[str, Path, IO[str]]) -> Schema:
    """Load a schema from a JSON file path or open text stream."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    return schema_from_dict(doc)


def save_schema(schema: Schema, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")
