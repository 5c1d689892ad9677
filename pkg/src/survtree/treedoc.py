"""Tree serialization: canonical JSON documents, DOT rendering, atomic writes.

JSON is the single source of truth; DOT and text renderings are derived
views. The document writer is canonical — sorted keys, two-space indent,
floats formatted with 17 significant digits — so serialize -> parse ->
serialize is byte-identical and equal trees produce equal files.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

from . import __version__
from .errors import DataError
from .data import SplitRule
from .partition import CovariateInfo, Tree, describe_rule, _route

FORMAT_VERSION = 1


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise DataError(f"cannot serialize non-finite float {x!r}")
    return f"{x:.17g}"


def dumps_canonical(obj, _indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, 2-space indent, .17g floats."""
    pad = "  " * _indent
    inner = "  " * (_indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return repr(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {dumps_canonical(v, _indent + 1)}"
            for k, v in sorted(obj.items())
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{dumps_canonical(v, _indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise DataError(f"cannot serialize {type(obj).__name__}")


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file in the target directory plus rename, so a failed
    command never leaves a partial output file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def tree_to_document(
    tree: Tree,
    time_column: str,
    event_column: str,
    input_sha256: str | None = None,
    seed: int | None = None,
) -> dict:
    """Serializable form of a fitted tree (node 1 is the root; ids level-order)."""
    cfg = tree.config
    covariates = [
        {
            "name": ci.name,
            "kind": ci.kind,
            "levels": list(ci.levels) if ci.levels else None,
            "ordered": ci.ordered,
        }
        for ci in tree.covariate_info
    ]
    nodes = []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        med = node.km.median
        entry = {
            "id": node.id,
            "kind": "leaf" if node.is_leaf else "internal",
            "n": float(node.n_effective),
            "events": float(node.events),
            "km_median": None if med is None else float(med),
            "p_adjusted": None if node.p_adjusted is None else float(node.p_adjusted),
        }
        if node.is_leaf:
            entry["stop_reason"] = node.stop_reason
        else:
            entry["covariate"] = node.split.covariate
            if node.split.cutoff is not None:
                entry["split"] = {"cutoff": float(node.split.cutoff)}
            else:
                entry["split"] = {"subset": list(node.split.subset)}
            entry["children"] = list(node.children)
        nodes.append(entry)

    return {
        "format_version": FORMAT_VERSION,
        "config": {
            "alpha": float(cfg.alpha),
            "minsplit": float(cfg.minsplit),
            "minbucket": float(cfg.minbucket),
            "max_depth": cfg.max_depth,
            "test": {
                "method": cfg.test.name,
                "replicates": cfg.test.replicates,
                "seed": cfg.test.seed,
            },
            "time_column": time_column,
            "event_column": event_column,
            "covariates": covariates,
        },
        "nodes": nodes,
        "provenance": {
            "input_sha256": input_sha256,
            "seed": seed,
            "tool_version": __version__,
        },
    }


def parse_document(text: str) -> dict:
    """Parse and validate a tree document; raises DataError when malformed."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed tree document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise DataError("malformed tree document: bad or missing format_version")
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise DataError("malformed tree document: no nodes")
    ids = {n.get("id") for n in nodes}
    if len(ids) != len(nodes) or 1 not in ids:
        raise DataError("malformed tree document: node ids must be unique and include 1")
    for n in nodes:
        if n.get("kind") == "internal":
            if "split" not in n or "covariate" not in n:
                raise DataError(f"malformed tree document: node {n.get('id')} lacks a split")
            kids = n.get("children")
            if not isinstance(kids, list) or len(kids) != 2 or any(k not in ids for k in kids):
                raise DataError(
                    f"malformed tree document: node {n.get('id')} has bad children"
                )
        elif n.get("kind") != "leaf":
            raise DataError(f"malformed tree document: node {n.get('id')} has unknown kind")
    covs = doc.get("config", {}).get("covariates")
    if not isinstance(covs, list):
        raise DataError("malformed tree document: missing covariate metadata")
    return doc


def _doc_info(doc: dict, name: str) -> CovariateInfo:
    for c in doc["config"]["covariates"]:
        if c["name"] == name:
            return CovariateInfo(
                name=name,
                kind=c["kind"],
                levels=tuple(c["levels"]) if c.get("levels") else None,
                ordered=bool(c.get("ordered")),
            )
    raise DataError(f"tree document references unknown covariate {name!r}")


def _doc_rule(node: dict) -> SplitRule:
    split = node["split"]
    if "cutoff" in split:
        return SplitRule(node["covariate"], cutoff=float(split["cutoff"]))
    return SplitRule(node["covariate"], subset=tuple(split["subset"]))


def route_document(doc: dict, observation: dict) -> dict:
    """Route one observation through a parsed document; returns the leaf
    node entry. Same error contract as partition.predict_node."""
    by_id = {n["id"]: n for n in doc["nodes"]}
    node = by_id[1]
    while node["kind"] == "internal":
        rule = _doc_rule(node)
        if rule.covariate not in observation or observation[rule.covariate] is None:
            raise DataError(f"observation missing split covariate {rule.covariate!r}")
        try:
            left = _route(observation[rule.covariate], _doc_info(doc, rule.covariate), rule)
        except (TypeError, ValueError) as exc:
            raise DataError(
                f"bad value for split covariate {rule.covariate!r}: {exc}"
            ) from exc
        node = by_id[node["children"][0] if left else node["children"][1]]
    return node


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def document_to_dot(doc: dict) -> str:
    """DOT digraph: internal nodes show the split variable and p-value, edges
    the split condition, leaves their size, events and KM median. Nodes are
    emitted in id order, so equal documents give identical bytes."""
    lines = [
        "digraph survival_tree {",
        '  node [shape=box, fontname="Helvetica"];',
    ]
    nodes = sorted(doc["nodes"], key=lambda n: n["id"])
    by_id = {n["id"]: n for n in nodes}
    for n in nodes:
        if n["kind"] == "internal":
            p = n.get("p_adjusted")
            p_s = "NA" if p is None else f"{p:.4g}"
            pieces = [n["covariate"], f"p = {p_s}"]
        else:
            med = n.get("km_median")
            med_s = "NA" if med is None else f"{med:.6g}"
            pieces = [f"n = {n['n']:g}", f"events = {n['events']:g}", f"median = {med_s}"]
        label = "\\n".join(_dot_escape(p) for p in pieces)
        lines.append(f'  n{n["id"]} [label="{label}"];')
    for n in nodes:
        if n["kind"] != "internal":
            continue
        rule = _doc_rule(n)
        left_label, right_label = describe_rule(rule, _doc_info(doc, n["covariate"]))
        kids = n["children"]
        for kid, lab in zip(kids, (left_label, right_label)):
            if kid not in by_id:
                raise DataError(f"malformed tree document: missing node {kid}")
            lines.append(f'  n{n["id"]} -> n{kid} [label="{_dot_escape(lab)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
