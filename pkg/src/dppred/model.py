"""End-to-end training, prediction, evaluation and model persistence.

A trained model is the selected rule list plus the GLM fitted over it,
bundled with the fitted column schema so new CSV files encode identically.
The on-disk format is versioned, human-readable text: rendered rules next
to machine-exact hex thresholds and weights, so the model file doubles as
the report and round-trips predictions bit for bit.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import ColumnSchema, Dataset, encoded_feature_names
from .glm import TASK_LINEAR, TASK_LOGISTIC, FitConfig, GlmModel, fit_glm, predict_proba
from .patterns import (
    Condition,
    ConditionCounter,
    Pattern,
    construct_pattern_space,
    extract_patterns,
    matches,
    render_pattern,
)
from .selection import SelectionResult, forward_select, lasso_select
from .tree import TreeConfig, fit_forest

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

METHOD_FORWARD = "forward"
METHOD_LASSO = "lasso"

FORMAT_VERSION = 1
_HEADER = "dppred model format"


@dataclass
class HyperParams:
    tree: TreeConfig
    k: int
    method: str = METHOD_FORWARD
    task: str = TASK_CLASSIFICATION

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.method not in (METHOD_FORWARD, METHOD_LASSO):
            raise ValueError(f"unknown selection method {self.method!r}")
        if self.task not in (TASK_CLASSIFICATION, TASK_REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")

    @classmethod
    def for_task(cls, task: str, seed: int = 0, method: str = METHOD_FORWARD,
                 high_dimensional: bool = False) -> "HyperParams":
        """Defaults: T=100, D=6, sigma=10 with k=20 (classification) or
        k=30 (regression); the high-dimensional preset raises to T=200,
        D=10, k=50."""
        if high_dimensional:
            tree = TreeConfig(n_trees=200, max_depth=10, min_bag=10, seed=seed)
            k = 50
        else:
            tree = TreeConfig(seed=seed)
            k = 20 if task == TASK_CLASSIFICATION else 30
        return cls(tree=tree, k=k, method=method, task=task)


@dataclass
class DppredModel:
    patterns: list[Pattern]
    glm: GlmModel
    schema: list[ColumnSchema] | None
    feature_names: list[str]
    feature_sources: list[str]
    label_kind: str
    label_names: list[str] | None = None
    label_bounds: tuple[float, float] | None = None
    provenance: dict = field(default_factory=dict)
    selection: SelectionResult | None = field(default=None, repr=False)

    @property
    def task(self) -> str:
        return TASK_CLASSIFICATION if self.glm.task == TASK_LOGISTIC else TASK_REGRESSION

    @property
    def k(self) -> int:
        return len(self.patterns)


def _glm_task(task: str) -> str:
    return TASK_LOGISTIC if task == TASK_CLASSIFICATION else TASK_LINEAR


def _check_labels(ds: Dataset, task: str) -> None:
    want = "class" if task == TASK_CLASSIFICATION else "real"
    if ds.label_kind != want:
        raise ValueError(f"{task} training needs {want!r} labels, dataset has {ds.label_kind!r}")


def train(ds: Dataset, hp: HyperParams, fit_cfg: FitConfig | None = None) -> DppredModel:
    """Grow the forest, pool its rules, select top-k, and refit the GLM."""
    if ds.n == 0:
        raise ValueError("cannot train on an empty dataset")
    _check_labels(ds, hp.task)

    forest = fit_forest(ds, hp.tree)
    pool = extract_patterns(forest)
    if len(pool) == 0:
        raise ValueError("no patterns generated")

    space = construct_pattern_space(ds, pool.patterns)
    if hp.method == METHOD_FORWARD:
        result = forward_select(space, ds.y, hp.k, _glm_task(hp.task), fit_cfg=fit_cfg)
    else:
        result = lasso_select(space, ds.y, hp.k, _glm_task(hp.task), fit_cfg=fit_cfg)

    return DppredModel(
        patterns=[pool.patterns[j] for j in result.chosen],
        glm=result.model,
        schema=ds.schema,
        feature_names=list(ds.feature_names),
        feature_sources=list(ds.feature_sources),
        label_kind=ds.label_kind,
        label_names=list(ds.label_names) if ds.label_names else None,
        label_bounds=ds.label_bounds,
        provenance={
            "seed": hp.tree.seed,
            "n_trees": hp.tree.n_trees,
            "max_depth": hp.tree.max_depth,
            "min_bag": hp.tree.min_bag,
            "n_feature_candidates": hp.tree.n_feature_candidates,
            "n_threshold_candidates": hp.tree.n_threshold_candidates,
            "k": hp.k,
            "method": hp.method,
            "task": hp.task,
        },
        selection=result,
    )


def refit_on_patterns(ds: Dataset, rules: list[Pattern], task: str,
                      fit_cfg: FitConfig | None = None,
                      provenance: dict | None = None) -> DppredModel:
    """Build a model from an explicit rule list (no mining, just the GLM fit)."""
    _check_labels(ds, task)
    space = construct_pattern_space(ds, rules)
    glm = fit_glm(space.astype(np.float64), ds.y, _glm_task(task), cfg=fit_cfg)
    return DppredModel(
        patterns=list(rules),
        glm=glm,
        schema=ds.schema,
        feature_names=list(ds.feature_names),
        feature_sources=list(ds.feature_sources),
        label_kind=ds.label_kind,
        label_names=list(ds.label_names) if ds.label_names else None,
        label_bounds=ds.label_bounds,
        provenance=provenance or {"task": task, "method": "refit", "k": len(rules)},
    )


def _check_compatible(m: DppredModel, ds: Dataset) -> None:
    if list(ds.feature_names) != list(m.feature_names):
        raise ValueError("schema mismatch: dataset features do not match the model's schema")


def predict_one(m: DppredModel, x: np.ndarray, counter: ConditionCounter | None = None):
    """Prediction for a single feature vector (streaming path)."""
    bits = np.empty(len(m.patterns), dtype=np.float64)
    for j, p in enumerate(m.patterns):
        bits[j] = 1.0 if matches(p, x, counter) else 0.0
    if m.glm.task == TASK_LINEAR:
        raw = float(m.glm.weights @ bits + m.glm.intercept)
        if m.label_bounds is not None:
            lo, hi = m.label_bounds
            raw = raw * (hi - lo) + lo
        return raw
    scores = predict_proba(m.glm, bits)
    return int(np.argmax(scores))


def predict(m: DppredModel, ds: Dataset) -> np.ndarray:
    """Order-preserving predictions; bitwise identical to the streaming path."""
    _check_compatible(m, ds)
    if m.task == TASK_CLASSIFICATION:
        return np.array([predict_one(m, ds.x[i]) for i in range(ds.n)], dtype=np.int64)
    return np.array([predict_one(m, ds.x[i]) for i in range(ds.n)], dtype=np.float64)


def predict_probabilities(m: DppredModel, ds: Dataset) -> np.ndarray:
    _check_compatible(m, ds)
    if m.task != TASK_CLASSIFICATION:
        raise ValueError("probabilities are defined for classification models only")
    out = []
    for i in range(ds.n):
        bits = np.array([1.0 if matches(p, ds.x[i]) else 0.0 for p in m.patterns])
        out.append(predict_proba(m.glm, bits))
    return np.vstack(out)


def evaluate(preds: np.ndarray, truth: np.ndarray, task: str) -> dict:
    """Accuracy with confusion counts, or RMSE with a residual summary."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if len(preds) != len(truth):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truth)} truths")
    if task == TASK_CLASSIFICATION:
        p = preds.astype(np.int64)
        t = truth.astype(np.int64)
        n_classes = int(max(p.max(initial=0), t.max(initial=0))) + 1
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(confusion, (t, p), 1)
        return {"accuracy": float((p == t).mean()), "confusion": confusion}
    if task == TASK_REGRESSION:
        r = preds.astype(np.float64) - truth.astype(np.float64)
        return {
            "rmse": float(np.sqrt(np.mean(r * r))),
            "residuals": {
                "mean": float(r.mean()),
                "std": float(r.std()),
                "min": float(r.min()),
                "max": float(r.max()),
            },
        }
    raise ValueError(f"unknown task {task!r}")


def render_model(m: DppredModel) -> str:
    """Human-readable rule listing with the GLM weights."""
    lines = [f"{m.task} model with {m.k} rules"]
    w = np.atleast_2d(m.glm.weights)
    for j, p in enumerate(m.patterns):
        weight = w[0, j] if w.shape[0] == 1 else w[:, j]
        lines.append(f"  [{j}] weight={np.round(weight, 6)} :: {render_pattern(p, m.feature_names)}")
    return "\n".join(lines)


# --- persistence ----------------------------------------------------------


def _hex(v: float) -> str:
    return float(v).hex()


def _schema_line(col: ColumnSchema) -> str:
    payload = {
        "name": col.name,
        "kind": col.kind,
        "categories": col.categories,
        "median": _hex(col.median) if col.median is not None else None,
    }
    return json.dumps(payload, sort_keys=True)


def _parse_schema_line(line: str) -> ColumnSchema:
    payload = json.loads(line)
    return ColumnSchema(
        name=payload["name"],
        kind=payload["kind"],
        categories=payload["categories"],
        median=float.fromhex(payload["median"]) if payload["median"] else None,
    )


def _pattern_machine_line(p: Pattern) -> str:
    return " ".join(f"{c.dim}:{c.op}:{_hex(c.threshold)}" for c in p.conditions)


def _parse_pattern_line(line: str) -> Pattern:
    conds = []
    for tok in line.split():
        dim, op, thr = tok.split(":")
        conds.append(Condition(int(dim), op, float.fromhex(thr)))
    return Pattern(tuple(conds))


def save(m: DppredModel, path) -> None:
    """Write the versioned text model file."""
    if m.schema is None:
        raise ValueError("model carries no schema; cannot serialize")
    lines = [f"{_HEADER} {FORMAT_VERSION}"]

    lines.append("[provenance]")
    for key in sorted(m.provenance):
        lines.append(f"{key}={m.provenance[key]}")

    lines.append("[schema]")
    lines.append(f"label_task={m.label_kind}")
    for col in m.schema:
        lines.append(_schema_line(col))

    lines.append("[label]")
    if m.label_names is not None:
        lines.append("names=" + json.dumps(m.label_names))
    if m.label_bounds is not None:
        lines.append(f"bounds={_hex(m.label_bounds[0])} {_hex(m.label_bounds[1])}")

    lines.append("[patterns]")
    lines.append(f"count={len(m.patterns)}")
    for p in m.patterns:
        lines.append("# " + render_pattern(p, m.feature_names))
        lines.append(_pattern_machine_line(p))

    lines.append("[glm]")
    lines.append(f"task={m.glm.task}")
    lines.append(f"classes={m.glm.classes}")
    w = np.atleast_2d(m.glm.weights)
    b = np.atleast_1d(m.glm.intercept)
    lines.append("intercept " + " ".join(_hex(v) for v in b))
    for row in w:
        lines.append("weights " + " ".join(_hex(v) for v in row))

    lines.append("[end]")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _split_sections(text: str, expect_header: str):
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    if not lines or not lines[0].startswith(expect_header):
        raise ValueError("not a recognized model file")
    version_txt = lines[0][len(expect_header):].strip()
    try:
        version = int(version_txt)
    except ValueError:
        raise ValueError("not a recognized model file: malformed version") from None
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {version} (this build reads version {FORMAT_VERSION})")

    sections: dict[str, list[str]] = {}
    current = None
    for ln in lines[1:]:
        if ln.startswith("[") and ln.endswith("]"):
            current = ln[1:-1]
            sections[current] = []
        elif current is not None and ln:
            sections[current].append(ln)
    if "end" not in sections:
        last = current if current else "header"
        raise ValueError(f"truncated model file: no [end] marker after section '{last}'")
    return sections


def _require(sections: dict, name: str) -> list[str]:
    if name not in sections:
        raise ValueError(f"truncated model file: missing section '{name}'")
    return sections[name]


def load(path) -> DppredModel:
    """Read a model file written by :func:`save`; errors name the bad section."""
    with open(path, encoding="utf-8") as fh:
        sections = _split_sections(fh.read(), _HEADER)

    prov = {}
    for ln in _require(sections, "provenance"):
        key, _, value = ln.partition("=")
        prov[key] = value

    schema_lines = _require(sections, "schema")
    if not schema_lines or not schema_lines[0].startswith("label_task="):
        raise ValueError("truncated model file: section 'schema' is missing label_task")
    label_kind = schema_lines[0].split("=", 1)[1]
    schema = [_parse_schema_line(ln) for ln in schema_lines[1:]]
    feature_names, feature_sources, _ = encoded_feature_names(schema)

    label_names = None
    label_bounds = None
    for ln in _require(sections, "label"):
        if ln.startswith("names="):
            label_names = json.loads(ln.split("=", 1)[1])
        elif ln.startswith("bounds="):
            lo, hi = ln.split("=", 1)[1].split()
            label_bounds = (float.fromhex(lo), float.fromhex(hi))

    pat_lines = _require(sections, "patterns")
    if not pat_lines or not pat_lines[0].startswith("count="):
        raise ValueError("truncated model file: section 'patterns' is missing its count")
    count = int(pat_lines[0].split("=", 1)[1])
    machine = [ln for ln in pat_lines[1:] if not ln.startswith("#")]
    if len(machine) != count:
        raise ValueError(
            f"truncated model file: section 'patterns' lists {len(machine)} rules, expected {count}")
    rules = [_parse_pattern_line(ln) for ln in machine]

    glm_lines = _require(sections, "glm")
    glm_kv = {}
    weights_rows = []
    intercepts = None
    for ln in glm_lines:
        if ln.startswith("intercept "):
            intercepts = [float.fromhex(tok) for tok in ln.split()[1:]]
        elif ln.startswith("weights "):
            weights_rows.append([float.fromhex(tok) for tok in ln.split()[1:]])
        else:
            key, _, value = ln.partition("=")
            glm_kv[key] = value
    if intercepts is None or not weights_rows:
        raise ValueError("truncated model file: section 'glm' is missing weights")
    task = glm_kv.get("task", TASK_LINEAR)
    classes = int(glm_kv.get("classes", 0))
    if len(weights_rows) == 1 and classes <= 2:
        glm = GlmModel(weights=np.array(weights_rows[0]), intercept=intercepts[0],
                       task=task, classes=classes)
    else:
        glm = GlmModel(weights=np.array(weights_rows), intercept=np.array(intercepts),
                       task=task, classes=classes)

    return DppredModel(
        patterns=rules,
        glm=glm,
        schema=schema,
        feature_names=feature_names,
        feature_sources=feature_sources,
        label_kind=label_kind,
        label_names=label_names,
        label_bounds=label_bounds,
        provenance=prov,
    )
