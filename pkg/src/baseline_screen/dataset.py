"""Trial baseline datasets: JSON/CSV parsing, validation, and transformations.

JSON layout (``schema_version: 1``)::

    {
      "schema_version": 1,
      "groups": [{"label": "treatment", "n": 47}, {"label": "control", "n": 47}],
      "metadata": "free text",
      "variables": [
        {"name": "male", "type": "dichotomous", "yes": [25, 27]},
        {"name": "diagnosis", "type": "categorical", "counts": [[10, 12], [37, 35]]},
        {"name": "age", "type": "continuous", "mean": [58.1, 60.3], "sd": [14.2, 15.0],
         "decimals": 1}
      ]
    }

Every variable may carry ``"n": [n1, n2]`` to override the group sizes (rows
with missing data) and ``"test"``: ``fisher`` / ``chisq`` / ``chisq_yates`` for
dichotomous variables, ``ttest`` / ``welch`` for continuous ones.
"""

import csv
from dataclasses import dataclass, replace
from enum import Enum
import io
import json
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .exact_tests import ContinuousSummary, TestKind
from .tables import Table2x2, TableRxC

__all__ = [
    "SCHEMA_VERSION",
    "DatasetError",
    "Group",
    "GroupingError",
    "TrialDataset",
    "Variable",
    "VariableKind",
    "apply_tie_adjustment",
    "dataset_from_dict",
    "dataset_to_dict",
    "group_categorical",
    "parse_csv",
    "parse_dataset",
    "serialize_dataset",
]

SCHEMA_VERSION = 1

_TABULAR_TESTS = {
    "dichotomous": ("fisher", "chisq", "chisq_yates"),
    "categorical": ("fisher",),
    "continuous": ("ttest", "welch"),
}
_DEFAULT_TEST = {"dichotomous": "fisher", "categorical": "fisher", "continuous": "ttest"}


class DatasetError(ValueError):
    """Validation failure; ``errors`` lists one location-tagged message per problem."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class VariableKind(str, Enum):
    DICHOTOMOUS = "dichotomous"
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Group:
    label: str
    n: int


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VariableKind
    data: Union[Table2x2, TableRxC, ContinuousSummary]
    test: str
    n_override: Optional[Tuple[int, int]] = None
    adjustments: Tuple[str, ...] = ()

    @property
    def test_kind(self) -> Optional[TestKind]:
        if self.kind is VariableKind.CONTINUOUS:
            return None
        return TestKind(self.test)


@dataclass(frozen=True)
class TrialDataset:
    variables: Tuple[Variable, ...]
    groups: Tuple[Group, Group]
    metadata: Any = ""

    def __post_init__(self):
        errors = []
        if not self.variables:
            errors.append("variables: a dataset needs at least one variable")
        seen = set()
        for i, var in enumerate(self.variables):
            if var.name in seen:
                errors.append(f"variables[{i}] ({var.name!r}): duplicate variable name")
            seen.add(var.name)
            sizes = var.n_override or (self.groups[0].n, self.groups[1].n)
            if var.kind is not VariableKind.CONTINUOUS and _column_totals(var.data) != tuple(sizes):
                errors.append(
                    f"variables[{i}] ({var.name!r}): column totals {_column_totals(var.data)} "
                    f"do not match group sizes {tuple(sizes)}"
                )
        if errors:
            raise DatasetError(errors)

    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


def _column_totals(data):
    if isinstance(data, Table2x2):
        return (data.n1, data.n2)
    return tuple(sum(col) for col in zip(*data.counts))


# -- parsing --------------------------------------------------------------------

def _int_pair(value, where, what, errors):
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        errors.append(f"{where}: '{what}' must be a list of two integers, got {value!r}")
        return None
    return tuple(value)


def _num_pair(value, where, what, errors):
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        errors.append(f"{where}: '{what}' must be a list of two numbers, got {value!r}")
        return None
    return tuple(float(v) for v in value)


def _parse_variable(i, raw, groups, errors) -> Optional[Variable]:
    where = f"variables[{i}]"
    if not isinstance(raw, dict):
        errors.append(f"{where}: expected an object")
        return None
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        errors.append(f"{where}: missing or empty 'name'")
        return None
    where = f"{where} ({name!r})"
    try:
        kind = VariableKind(raw.get("type"))
    except ValueError:
        errors.append(f"{where}: 'type' must be dichotomous, categorical or continuous")
        return None

    test = raw.get("test", _DEFAULT_TEST[kind.value])
    if test not in _TABULAR_TESTS[kind.value]:
        errors.append(f"{where}: test {test!r} not available for {kind.value} variables")
        return None

    n_override = None
    if "n" in raw:
        n_override = _int_pair(raw["n"], where, "n", errors)
        if n_override is None:
            return None
    n1, n2 = n_override or (groups[0].n, groups[1].n)
    start = len(errors)

    if kind is VariableKind.DICHOTOMOUS:
        yes = _int_pair(raw.get("yes"), where, "yes", errors)
        if yes is None:
            return None
        for k, n, label in ((yes[0], n1, "group 1"), (yes[1], n2, "group 2")):
            if k < 0:
                errors.append(f"{where}: negative yes count {k} in {label}")
            elif k > n:
                errors.append(f"{where}: yes count {k} exceeds {label} size {n}")
        if len(errors) > start:
            return None
        data = Table2x2(yes[0], yes[1], n1, n2)
    elif kind is VariableKind.CATEGORICAL:
        counts = raw.get("counts")
        if (not isinstance(counts, list) or len(counts) < 2
                or not all(isinstance(row, list) and len(row) == 2 for row in counts)
                or not all(isinstance(c, int) and not isinstance(c, bool) for row in counts for c in row)):
            errors.append(f"{where}: 'counts' must be a matrix of integers with one [group1, group2] row per category")
            return None
        if any(c < 0 for row in counts for c in row):
            errors.append(f"{where}: negative counts")
            return None
        totals = (sum(r[0] for r in counts), sum(r[1] for r in counts))
        if totals != (n1, n2):
            errors.append(f"{where}: column totals {totals} do not match group sizes {(n1, n2)}")
            return None
        data = TableRxC(tuple(tuple(row) for row in counts))
    else:
        mean = _num_pair(raw.get("mean"), where, "mean", errors)
        sd = _num_pair(raw.get("sd"), where, "sd", errors)
        decimals = raw.get("decimals")
        if decimals is not None and (not isinstance(decimals, int) or isinstance(decimals, bool) or decimals < 0):
            errors.append(f"{where}: 'decimals' must be a non-negative integer")
            return None
        if mean is None or sd is None:
            return None
        if min(sd) < 0:
            errors.append(f"{where}: negative standard deviation")
            return None
        if min(n1, n2) < 2:
            errors.append(f"{where}: t-tests need at least 2 patients per group")
            return None
        data = ContinuousSummary((n1, n2), mean, sd, decimals)

    adjustments = tuple(raw.get("adjustments", ()))
    return Variable(name, kind, data, test, n_override, adjustments)


def dataset_from_dict(doc: Dict[str, Any]) -> TrialDataset:
    errors: List[str] = []
    if not isinstance(doc, dict):
        raise DatasetError(["document: expected a JSON object"])
    if doc.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    raw_groups = doc.get("groups")
    groups = None
    if (not isinstance(raw_groups, list) or len(raw_groups) != 2
            or not all(isinstance(g, dict) for g in raw_groups)):
        errors.append("groups: expected exactly two {label, n} objects")
    else:
        parsed = []
        for j, g in enumerate(raw_groups):
            n = g.get("n")
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                errors.append(f"groups[{j}]: 'n' must be a positive integer")
            parsed.append(Group(str(g.get("label", f"group {j + 1}")), n if isinstance(n, int) else 0))
        groups = tuple(parsed)
    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, list) or not raw_vars:
        errors.append("variables: expected a non-empty list")
    if errors:
        raise DatasetError(errors)

    variables = []
    seen = {}
    for i, raw in enumerate(raw_vars):
        var = _parse_variable(i, raw, groups, errors)
        if var is None:
            continue
        if var.name in seen:
            errors.append(f"variables[{i}] ({var.name!r}): duplicate name, first used at variables[{seen[var.name]}]")
            continue
        seen[var.name] = i
        variables.append(var)
    if errors:
        raise DatasetError(errors)
    return TrialDataset(tuple(variables), groups, doc.get("metadata", ""))


def parse_dataset(text: str) -> TrialDataset:
    """Parse and validate a JSON dataset document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    return dataset_from_dict(doc)


def parse_csv(text: str, labels: Tuple[str, str] = ("group 1", "group 2")) -> TrialDataset:
    """All-dichotomous convenience import with header ``name,k1,n1,k2,n2``.

    Group sizes are the largest per-row denominators; rows with smaller
    denominators get a per-variable size override.
    """
    reader = csv.DictReader(io.StringIO(text))
    expected = ["name", "k1", "n1", "k2", "n2"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        raise DatasetError([f"line 1: header must be {','.join(expected)}"])
    rows = []
    errors = []
    for lineno, row in enumerate(reader, start=2):
        try:
            values = [int(row[k]) for k in expected[1:]]
        except (TypeError, ValueError):
            errors.append(f"line {lineno}: k1, n1, k2, n2 must be integers")
            continue
        rows.append((lineno, row["name"].strip(), *values))
    if errors:
        raise DatasetError(errors)
    if not rows:
        raise DatasetError(["line 2: no variables"])
    g1 = max(r[3] for r in rows)
    g2 = max(r[5] for r in rows)
    variables = []
    for lineno, name, k1, n1, k2, n2 in rows:
        entry = {"name": name, "type": "dichotomous", "yes": [k1, k2]}
        if (n1, n2) != (g1, g2):
            entry["n"] = [n1, n2]
        variables.append(entry)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "groups": [{"label": labels[0], "n": g1}, {"label": labels[1], "n": g2}],
        "variables": variables,
    }
    try:
        return dataset_from_dict(doc)
    except DatasetError as exc:
        # re-tag with CSV line numbers
        tagged = []
        for msg in exc.errors:
            if msg.startswith("variables["):
                idx = int(msg[len("variables["):msg.index("]")])
                msg = f"line {rows[idx][0]}: {msg}"
            tagged.append(msg)
        raise DatasetError(tagged) from None


# -- serialization --------------------------------------------------------------

def _variable_to_dict(var: Variable) -> Dict[str, Any]:
    out: Dict[str, Any] = {"name": var.name, "type": var.kind.value}
    data = var.data
    if var.kind is VariableKind.DICHOTOMOUS:
        out["yes"] = [data.k1, data.k2]
    elif var.kind is VariableKind.CATEGORICAL:
        out["counts"] = [list(row) for row in data.counts]
    else:
        out["mean"] = list(data.mean)
        out["sd"] = list(data.sd)
        if data.decimals is not None:
            out["decimals"] = data.decimals
    if var.n_override is not None:
        out["n"] = list(var.n_override)
    if var.test != _DEFAULT_TEST[var.kind.value]:
        out["test"] = var.test
    if var.adjustments:
        out["adjustments"] = list(var.adjustments)
    return out


def dataset_to_dict(ds: TrialDataset) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "groups": [{"label": g.label, "n": g.n} for g in ds.groups],
        "metadata": ds.metadata,
        "variables": [_variable_to_dict(v) for v in ds.variables],
    }


def serialize_dataset(ds: TrialDataset) -> str:
    return json.dumps(dataset_to_dict(ds), indent=2)


# -- transformations ------------------------------------------------------------

class GroupingError(ValueError):
    pass


def group_categorical(ds: TrialDataset, names: Sequence[str], new_name: str) -> TrialDataset:
    """Merge dichotomous rows that partition the patients into one categorical variable.

    The new variable takes the position of the first merged row; its
    categories are the merged rows in the order given.
    """
    names = list(names)
    if len(names) < 2:
        raise GroupingError("grouping needs at least two variables")
    if len(set(names)) != len(names):
        raise GroupingError("variable names to group must be distinct")
    if new_name in ds.names() and new_name not in names:
        raise GroupingError(f"a variable named {new_name!r} already exists")
    missing = [n for n in names if n not in ds.names()]
    if missing:
        raise GroupingError(f"unknown variables: {', '.join(missing)}")
    members = [ds.variable(n) for n in names]
    not_dich = [v.name for v in members if v.kind is not VariableKind.DICHOTOMOUS]
    if not_dich:
        raise GroupingError(f"only dichotomous variables can be grouped: {', '.join(not_dich)}")
    sizes = {(v.data.n1, v.data.n2) for v in members}
    if len(sizes) != 1:
        raise GroupingError(f"grouped variables have different group sizes: {sorted(sizes)}")
    n1, n2 = sizes.pop()
    sums = (sum(v.data.k1 for v in members), sum(v.data.k2 for v in members))
    if sums != (n1, n2):
        raise GroupingError(
            f"yes counts sum to {sums[0]} and {sums[1]} per group but group sizes are {n1} and {n2}; "
            "the rows do not partition the patients"
        )
    counts = tuple((v.data.k1, v.data.k2) for v in members)
    override = members[0].n_override
    merged = Variable(new_name, VariableKind.CATEGORICAL, TableRxC(counts), "fisher", override,
                      (f"grouped from {', '.join(names)}",))
    out = []
    for v in ds.variables:
        if v.name == names[0]:
            out.append(merged)
        elif v.name not in names:
            out.append(v)
    return replace(ds, variables=tuple(out))


def apply_tie_adjustment(s: ContinuousSummary) -> Tuple[ContinuousSummary, bool]:
    """Separate exactly equal reported means by one reporting unit.

    Group 1's mean moves down and group 2's up by half a unit of the last
    reported decimal, e.g. 1.6 and 1.6 at one decimal become 1.55 and 1.65.
    Returns the (possibly unchanged) summary and whether it was adjusted.
    """
    if s.mean[0] != s.mean[1]:
        return s, False
    if s.decimals is None:
        raise ValueError("tie adjustment needs the reporting precision; supply 'decimals' for this variable")
    half = 0.5 * 10.0 ** (-s.decimals)
    places = s.decimals + 1
    mean = (round(s.mean[0] - half, places), round(s.mean[1] + half, places))
    return replace(s, mean=mean), True
