"""Reading and writing datasets, panels, models, policies, instances and results.

CSV files are UTF-8, comma separated, with a mandatory header.  Outcomes are
stored as indices; the real-valued outcome grid lives in the spec JSON.
JSON documents carry ``format_version``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

from trialsearch.core import (
    Context,
    Dataset,
    ProblemSpec,
    RepeatedAction,
    SpecMismatch,
    Subject,
    TrialSearchError,
    Trajectory,
    TrialRecord,
)

FORMAT_VERSION = 1


class ParseError(TrialSearchError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _context_columns(spec: ProblemSpec) -> list[str]:
    return [f"x{i}" for i in range(len(spec.context_dims))]


def trajectory_header(spec: ProblemSpec) -> list[str]:
    return ["subject_id", *_context_columns(spec), "step", "action", "outcome_index", "terminal"]


def panel_header(spec: ProblemSpec) -> list[str]:
    return ["subject_id", *_context_columns(spec), *(f"y{a}" for a in range(spec.k))]


def _int(value: str, line: int, column: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ParseError(line, f"column {column!r}: expected integer, got {value!r}") from None


def write_trajectories(path, dataset: Dataset) -> None:
    spec = dataset.spec
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(trajectory_header(spec))
        for sid, tr in enumerate(dataset.trajectories):
            n = len(tr)
            for step, t in enumerate(tr.trials, start=1):
                last = step == n
                w.writerow([sid, *tr.context.coords, step, t.action, t.outcome_index,
                            int(tr.terminal) if last else 0])


def read_trajectories(path, spec: ProblemSpec) -> Dataset:
    """Parse a trajectory CSV, grouping rows by ``subject_id`` in order of first appearance."""
    ctx_cols = _context_columns(spec)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header") from None
        if header != trajectory_header(spec):
            raise SpecMismatch(f"header {header} does not match expected {trajectory_header(spec)}")
        groups: dict[str, dict] = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
            rec = dict(zip(header, row))
            sid = rec["subject_id"]
            ctx = Context(tuple(_int(rec[c], line, c) for c in ctx_cols))
            step = _int(rec["step"], line, "step")
            a = _int(rec["action"], line, "action")
            y = _int(rec["outcome_index"], line, "outcome_index")
            term = _int(rec["terminal"], line, "terminal")
            try:
                spec.validate_context(ctx)
                spec.validate_trial(a, y)
            except SpecMismatch as exc:
                raise ParseError(line, str(exc)) from None
            g = groups.setdefault(sid, {"context": ctx, "trials": [], "terminal": False, "line": line})
            if g["context"] != ctx:
                raise ParseError(line, f"subject {sid} changes context")
            if step != len(g["trials"]) + 1:
                raise ParseError(line, f"subject {sid}: expected step {len(g['trials']) + 1}, got {step}")
            if any(t.action == a for t in g["trials"]):
                raise RepeatedAction(f"subject {sid} repeats action {a} (line {line})")
            g["trials"].append(TrialRecord(a, y))
            g["terminal"] = bool(term)
    trajectories = [Trajectory(g["context"], tuple(g["trials"]), g["terminal"]) for g in groups.values()]
    return Dataset(spec, trajectories=trajectories)


def write_panels(path, spec: ProblemSpec, subjects: Iterable[Subject]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(panel_header(spec))
        for sid, s in enumerate(subjects):
            w.writerow([sid, *s.context.coords, *s.potential_outcomes])


def read_panels(path, spec: ProblemSpec) -> list[Subject]:
    ctx_cols = _context_columns(spec)
    expected = panel_header(spec)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header") from None
        missing = [c for c in expected if c not in header]
        if missing:
            raise SpecMismatch(f"panel file is missing columns {missing}")
        out = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
            rec = dict(zip(header, row))
            ctx = Context(tuple(_int(rec[c], line, c) for c in ctx_cols))
            ys = tuple(_int(rec[f"y{a}"], line, f"y{a}") for a in range(spec.k))
            try:
                spec.validate_context(ctx)
                for a, y in enumerate(ys):
                    spec.validate_trial(a, y)
            except SpecMismatch as exc:
                raise ParseError(line, str(exc)) from None
            out.append(Subject(ctx, ys))
    return out


# -- JSON documents --------------------------------------------------------------


def _dump(path, doc: dict) -> None:
    doc = {"format_version": FORMAT_VERSION, **doc}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.msg) from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise SpecMismatch(f"unsupported format_version {doc.get('format_version')!r}")
    return doc


def save_spec(path, spec: ProblemSpec) -> None:
    _dump(path, {"spec": spec.to_dict()})


def load_spec(path) -> ProblemSpec:
    return ProblemSpec.from_dict(_load(path)["spec"])


def save_model(path, model) -> None:
    _dump(path, {"spec": model.spec.to_dict(), **model.to_dict()})


def load_model(path):
    from trialsearch.model import model_from_dict

    doc = _load(path)
    return model_from_dict(ProblemSpec.from_dict(doc["spec"]), doc)


def save_policy(path, policy) -> None:
    _dump(path, {"spec": policy.spec.to_dict(), **policy.to_dict()})


def load_policy(path):
    from trialsearch.solvers import CdpPolicy, GreedyPolicy, NdpPolicy

    doc = _load(path)
    spec = ProblemSpec.from_dict(doc["spec"])
    kinds = {"cdp": CdpPolicy, "ndp": NdpPolicy, "greedy": GreedyPolicy}
    if doc.get("kind") not in kinds:
        raise SpecMismatch(f"unknown policy kind {doc.get('kind')!r}")
    return kinds[doc["kind"]].from_dict(spec, doc)


def save_instance(path, instance) -> None:
    _dump(path, {"instance": instance.to_dict()})


def load_instance(path):
    from trialsearch.dgp import DgpInstance

    return DgpInstance.from_dict(_load(path)["instance"])


def load_config(path) -> dict:
    """Single JSON document with optional sections ``spec``, ``dgp``, ``smoothing``,
    ``stopping``, ``solver``, ``eval``, ``seeds`` and ``paths``."""
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.msg) from None


# -- results -------------------------------------------------------------------

RESULT_FIELDS = ["solver", "estimator", "parameter", "value", "seed", "efficacy", "efficacy_se",
                 "mean_search_time", "search_time_se", "worst_search_time", "n_subjects"]
CURVE_FIELDS = ["solver", "estimator", "parameter", "value", "seed", "trial", "best_so_far"]


def write_results(path, rows: list[dict]) -> None:
    """``rows`` are dicts with the identifying fields plus a ``metrics`` entry."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            m = r["metrics"]
            w.writerow({**{k: r[k] for k in ("solver", "estimator", "parameter", "value", "seed")},
                        **m.row()})


def write_curves(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, CURVE_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            for t, v in enumerate(r["metrics"].best_so_far_curve, start=1):
                w.writerow({**{k: r[k] for k in ("solver", "estimator", "parameter", "value", "seed")},
                            "trial": t, "best_so_far": v})


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
