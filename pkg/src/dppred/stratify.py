"""Stratified modeling: global rules, rule-bag clustering, local rules.

Instances are first described by which globally mined rules they satisfy.
Treating each satisfied rule as a token, latent Dirichlet allocation over
these bags partitions the instances into disjoint clusters; each cluster
then gets its own locally mined rules, and one unified GLM is fitted over
the global block plus the (cluster-dependent) local block. Also houses the
longitudinal summary-statistics conversion for repeated measurements.
"""

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ColumnSchema, Dataset, encoded_feature_names, subset
from .glm import TASK_LINEAR, FitConfig, GlmModel, fit_glm, predict_proba
from .model import (
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    DppredModel,
    HyperParams,
    _glm_task,
    _parse_pattern_line,
    _parse_schema_line,
    _pattern_machine_line,
    _schema_line,
    _split_sections,
    _require,
    train,
)
from .patterns import Pattern, construct_pattern_space, pattern_matrix, render_pattern
from .rng import (
    STREAM_EMPTY_BAG,
    STREAM_FOLD_IN,
    STREAM_LDA,
    STREAM_LOCAL_TREES,
    sub_rng,
    derive_seed,
)

_STRAT_HEADER = "dppred stratified model format"


@dataclass
class StratifyConfig:
    n_global: int = 30        # rules mined on all instances
    n_local: int = 10         # rules mined inside each cluster
    n_clusters: int = 3
    lda_alpha: float | None = None  # default 50 / n_clusters
    lda_beta: float = 0.1
    gibbs_iterations: int = 500
    fold_in_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if min(self.n_global, self.n_local, self.n_clusters) < 1:
            raise ValueError("n_global, n_local and n_clusters must all be >= 1")
        if self.gibbs_iterations < 1 or self.fold_in_iterations < 1:
            raise ValueError("iteration counts must be >= 1")

    @property
    def alpha(self) -> float:
        # rule bags hold at most a few dozen tokens, so the document prior
        # must stay well below typical bag sizes for the data to speak
        return self.lda_alpha if self.lda_alpha is not None else 1.0 / self.n_clusters


@dataclass
class StratifiedModel:
    global_patterns: list[Pattern]
    topics: np.ndarray                  # (n_clusters, n_global_patterns), rows sum to 1
    cluster_patterns: list[list[Pattern]]
    glm: GlmModel
    cluster_assignments: np.ndarray
    config: StratifyConfig
    schema: list[ColumnSchema] | None
    feature_names: list[str]
    feature_sources: list[str]
    label_kind: str
    label_names: list[str] | None = None
    label_bounds: tuple[float, float] | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def task(self) -> str:
        return TASK_REGRESSION if self.glm.task == TASK_LINEAR else TASK_CLASSIFICATION


def longitudinal_features(xs, ts) -> np.ndarray:
    """Summarize one repeatedly measured variable into 12 fixed features.

    Six statistics of the values (mean, first, last, max, min, population
    std) and the same six of the finite-difference rates; with a single
    measurement the rate block is NaN and is imputed downstream like any
    missing numeric cell.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ts.shape or len(xs) < 1:
        raise ValueError("values and times must be equal-length non-empty vectors")
    if len(ts) > 1 and not np.all(np.diff(ts) > 0):
        raise ValueError("measurement times must be strictly increasing")

    def stats(v):
        return [float(v.mean()), float(v[0]), float(v[-1]),
                float(v.max()), float(v.min()), float(v.std())]

    if len(xs) == 1:
        rate_block = [np.nan] * 6
    else:
        rates = np.diff(xs) / np.diff(ts)
        rate_block = stats(rates)
    return np.array(stats(xs) + rate_block)


def _bits_to_tokens(bits: np.ndarray, rng=None):
    """Ragged satisfied-rule ids per instance, padded to a rectangle.

    Token order within an instance is shuffled when a generator is given;
    otherwise tokens of one rule always share a slot and the slot-blocked
    sampler would update them in lockstep.
    """
    bits = np.asarray(bits)
    n = bits.shape[0]
    counts = bits.sum(axis=1).astype(np.int64)
    width = int(counts.max()) if n else 0
    tokens = np.zeros((n, max(width, 1)), dtype=np.int64)
    mask = np.zeros((n, max(width, 1)), dtype=bool)
    for i in range(n):
        ids = np.flatnonzero(bits[i])
        if rng is not None and len(ids) > 1:
            ids = ids[rng.permutation(len(ids))]
        tokens[i, :len(ids)] = ids
        mask[i, :len(ids)] = True
    return tokens, mask, counts


def _gibbs_train(tokens, mask, n_topics, n_words, alpha, beta, iterations, rng):
    """Collapsed Gibbs over rule tokens, swept slot by slot.

    All documents update a slot simultaneously: document-topic counts stay
    exact per document, topic-word counts refresh after each slot pass.
    The second half of the sweeps is averaged, so short bags are not at
    the mercy of their final draw.
    """
    n, width = tokens.shape
    z = rng.integers(0, n_topics, size=(n, width))
    valid_docs, _ = np.nonzero(mask)

    ckw = np.zeros((n_topics, n_words))
    np.add.at(ckw, (z[mask], tokens[mask]), 1.0)
    cd = np.zeros((n, n_topics))
    np.add.at(cd, (valid_docs, z[mask]), 1.0)
    ck = ckw.sum(axis=1)

    burn_in = iterations // 2
    cd_acc = np.zeros_like(cd)
    ckw_acc = np.zeros_like(ckw)
    samples = 0

    for sweep in range(iterations):
        for j in rng.permutation(width):
            act = mask[:, j]
            if not act.any():
                continue
            docs = np.flatnonzero(act)
            words = tokens[docs, j]
            old = z[docs, j]
            np.add.at(ckw, (old, words), -1.0)
            np.add.at(ck, old, -1.0)
            cd[docs, old] -= 1.0

            word_part = (ckw[:, words].T + beta) / (ck + n_words * beta)[None, :]
            probs = word_part * (cd[docs] + alpha)
            cum = np.cumsum(probs, axis=1)
            draws = rng.random(len(docs)) * cum[:, -1]
            new = (cum < draws[:, None]).sum(axis=1)

            z[docs, j] = new
            np.add.at(ckw, (new, words), 1.0)
            np.add.at(ck, new, 1.0)
            cd[docs, new] += 1.0
        if sweep >= burn_in:
            cd_acc += cd
            ckw_acc += ckw
            samples += 1

    # sweep range always reaches burn_in, so samples >= 1
    mean_cd = cd_acc / samples
    mean_ckw = ckw_acc / samples
    return z, mean_cd, mean_ckw, mean_ckw.sum(axis=1)


def cluster_patients(global_bits: np.ndarray, cfg: StratifyConfig):
    """Hard cluster assignments plus the topic-rule distributions.

    Instances satisfying no rule are assigned uniformly at random from a
    dedicated seeded stream.
    """
    bits = np.asarray(global_bits)
    n, n_words = bits.shape
    rng = sub_rng(cfg.seed, STREAM_LDA)
    tokens, mask, counts = _bits_to_tokens(bits, rng)
    _, cd, ckw, ck = _gibbs_train(
        tokens, mask, cfg.n_clusters, n_words, cfg.alpha, cfg.lda_beta,
        cfg.gibbs_iterations, rng)

    assignments = np.argmax(cd + cfg.alpha, axis=1).astype(np.int64)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        draws = sub_rng(cfg.seed, STREAM_EMPTY_BAG).integers(0, cfg.n_clusters, size=len(empty))
        assignments[empty] = draws

    topics = (ckw + cfg.lda_beta) / (ck + n_words * cfg.lda_beta)[:, None]
    return assignments, topics


def _fold_in(bits: np.ndarray, topics: np.ndarray, alpha: float,
             iterations: int, rng, empty_rng) -> np.ndarray:
    """Assign clusters to new instances with the topic distributions frozen."""
    bits = np.asarray(bits)
    n = bits.shape[0]
    n_topics = topics.shape[0]
    tokens, mask, counts = _bits_to_tokens(bits, rng)
    width = tokens.shape[1]

    z = rng.integers(0, n_topics, size=(n, width))
    cd = np.zeros((n, n_topics))
    docs_all, _ = np.nonzero(mask)
    np.add.at(cd, (docs_all, z[mask]), 1.0)

    burn_in = iterations // 2
    cd_acc = np.zeros_like(cd)
    samples = 0
    for sweep in range(iterations):
        for j in rng.permutation(width):
            act = mask[:, j]
            if not act.any():
                continue
            docs = np.flatnonzero(act)
            words = tokens[docs, j]
            old = z[docs, j]
            cd[docs, old] -= 1.0
            probs = topics[:, words].T * (cd[docs] + alpha)
            cum = np.cumsum(probs, axis=1)
            draws = rng.random(len(docs)) * cum[:, -1]
            new = (cum < draws[:, None]).sum(axis=1)
            z[docs, j] = new
            cd[docs, new] += 1.0
        if sweep >= burn_in:
            cd_acc += cd
            samples += 1

    assignments = np.argmax(cd_acc / samples + alpha, axis=1).astype(np.int64)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        assignments[empty] = empty_rng.integers(0, n_topics, size=len(empty))
    return assignments


def _unified_matrix(global_bits, assignments, cluster_patterns, x, n_global, n_local):
    """Feature block of width n_global + n_local for every instance."""
    n = global_bits.shape[0]
    out = np.zeros((n, n_global + n_local), dtype=np.float64)
    out[:, :global_bits.shape[1]] = global_bits
    for c, rules in enumerate(cluster_patterns):
        rows = np.flatnonzero(assignments == c)
        if len(rows) == 0 or not rules:
            continue
        local = pattern_matrix(x[rows], rules)
        out[rows, n_global:n_global + len(rules)] = local
    return out


def train_stratified(ds: Dataset, hp: HyperParams, cfg: StratifyConfig,
                     fit_cfg: FitConfig | None = None) -> StratifiedModel:
    """Global rules, clusters, per-cluster local rules, one unified GLM."""
    hp_global = replace(hp, k=cfg.n_global)
    global_model = train(ds, hp_global, fit_cfg=fit_cfg)
    global_patterns = global_model.patterns
    global_bits = construct_pattern_space(ds, global_patterns)

    assignments, topics = cluster_patients(global_bits, cfg)

    cluster_patterns: list[list[Pattern]] = []
    for c in range(cfg.n_clusters):
        rows = np.flatnonzero(assignments == c)
        if len(rows) < hp.tree.min_bag:
            warnings.warn(f"cluster {c} has {len(rows)} instances (< min bag size); "
                          "falling back to global rules only")
            cluster_patterns.append([])
            continue
        local_tree = replace(hp.tree, seed=derive_seed(hp.tree.seed, STREAM_LOCAL_TREES, c))
        hp_local = replace(hp, k=cfg.n_local, tree=local_tree)
        try:
            local_model = train(subset(ds, rows), hp_local, fit_cfg=fit_cfg)
            cluster_patterns.append(local_model.patterns[:cfg.n_local])
        except ValueError as err:
            if "no patterns" in str(err) or "no support" in str(err):
                warnings.warn(f"cluster {c}: {err}; falling back to global rules only")
                cluster_patterns.append([])
            else:
                raise

    unified = _unified_matrix(global_bits, assignments, cluster_patterns,
                              ds.x, cfg.n_global, cfg.n_local)
    glm = fit_glm(unified, ds.y, _glm_task(hp.task), cfg=fit_cfg)

    return StratifiedModel(
        global_patterns=global_patterns,
        topics=topics,
        cluster_patterns=cluster_patterns,
        glm=glm,
        cluster_assignments=assignments,
        config=cfg,
        schema=ds.schema,
        feature_names=list(ds.feature_names),
        feature_sources=list(ds.feature_sources),
        label_kind=ds.label_kind,
        label_names=list(ds.label_names) if ds.label_names else None,
        label_bounds=ds.label_bounds,
        provenance={**global_model.provenance,
                    "n_global": cfg.n_global, "n_local": cfg.n_local,
                    "n_clusters": cfg.n_clusters, "lda_seed": cfg.seed},
    )


def assign_clusters(m: StratifiedModel, ds: Dataset) -> np.ndarray:
    """Fold new instances into the trained clusters."""
    global_bits = pattern_matrix(ds.x, m.global_patterns)
    return _fold_in(
        global_bits, m.topics, m.config.alpha, m.config.fold_in_iterations,
        sub_rng(m.config.seed, STREAM_FOLD_IN),
        sub_rng(m.config.seed, STREAM_EMPTY_BAG, 1))


def predict_stratified(m: StratifiedModel, ds: Dataset) -> np.ndarray:
    """Cluster each instance, evaluate its cluster's local rules, apply the GLM."""
    if list(ds.feature_names) != list(m.feature_names):
        raise ValueError("schema mismatch: dataset features do not match the model's schema")
    global_bits = pattern_matrix(ds.x, m.global_patterns)
    assignments = _fold_in(
        global_bits, m.topics, m.config.alpha, m.config.fold_in_iterations,
        sub_rng(m.config.seed, STREAM_FOLD_IN),
        sub_rng(m.config.seed, STREAM_EMPTY_BAG, 1))
    unified = _unified_matrix(global_bits, assignments, m.cluster_patterns,
                              ds.x, m.config.n_global, m.config.n_local)

    if m.glm.task == TASK_LINEAR:
        out = np.array([float(m.glm.weights @ unified[i] + m.glm.intercept)
                        for i in range(ds.n)])
        if m.label_bounds is not None:
            lo, hi = m.label_bounds
            out = np.array([v * (hi - lo) + lo for v in out])
        return out
    return np.array([int(np.argmax(predict_proba(m.glm, unified[i])))
                     for i in range(ds.n)], dtype=np.int64)


def importance_rows(m: StratifiedModel) -> list[tuple[str, str, int]]:
    """(variable, cluster, occurrence count) over all selected rule conditions."""
    def count_scope(rules):
        counts: dict[str, int] = {}
        for p in rules:
            for c in p.conditions:
                name = m.feature_sources[c.dim]
                counts[name] = counts.get(name, 0) + 1
        return counts

    rows = []
    for name, cnt in sorted(count_scope(m.global_patterns).items()):
        rows.append((name, "global", cnt))
    for c, rules in enumerate(m.cluster_patterns):
        for name, cnt in sorted(count_scope(rules).items()):
            rows.append((name, str(c), cnt))
    return rows


def write_importance_csv(m: StratifiedModel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("variable,cluster,frequency\n")
        for name, cluster, cnt in importance_rows(m):
            fh.write(f"{name},{cluster},{cnt}\n")


# --- persistence ----------------------------------------------------------


def save_stratified(m: StratifiedModel, path) -> None:
    if m.schema is None:
        raise ValueError("model carries no schema; cannot serialize")
    cfg = m.config
    lines = [f"{_STRAT_HEADER} 1"]
    lines.append("[provenance]")
    for key in sorted(m.provenance):
        lines.append(f"{key}={m.provenance[key]}")
    lines.append("[config]")
    lines.append(json.dumps({
        "n_global": cfg.n_global, "n_local": cfg.n_local, "n_clusters": cfg.n_clusters,
        "lda_alpha": cfg.lda_alpha, "lda_beta": cfg.lda_beta,
        "gibbs_iterations": cfg.gibbs_iterations,
        "fold_in_iterations": cfg.fold_in_iterations, "seed": cfg.seed,
    }, sort_keys=True))
    lines.append("[schema]")
    lines.append(f"label_task={m.label_kind}")
    for col in m.schema:
        lines.append(_schema_line(col))
    lines.append("[label]")
    if m.label_names is not None:
        lines.append("names=" + json.dumps(m.label_names))
    if m.label_bounds is not None:
        lines.append(f"bounds={float(m.label_bounds[0]).hex()} {float(m.label_bounds[1]).hex()}")
    lines.append("[global_patterns]")
    lines.append(f"count={len(m.global_patterns)}")
    for p in m.global_patterns:
        lines.append("# " + render_pattern(p, m.feature_names))
        lines.append(_pattern_machine_line(p))
    lines.append("[topics]")
    for row in m.topics:
        lines.append(" ".join(float(v).hex() for v in row))
    lines.append("[cluster_patterns]")
    for c, rules in enumerate(m.cluster_patterns):
        lines.append(f"cluster={c} count={len(rules)}")
        for p in rules:
            lines.append("# " + render_pattern(p, m.feature_names))
            lines.append(_pattern_machine_line(p))
    lines.append("[glm]")
    lines.append(f"task={m.glm.task}")
    lines.append(f"classes={m.glm.classes}")
    w = np.atleast_2d(m.glm.weights)
    b = np.atleast_1d(m.glm.intercept)
    lines.append("intercept " + " ".join(float(v).hex() for v in b))
    for row in w:
        lines.append("weights " + " ".join(float(v).hex() for v in row))
    lines.append("[end]")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_stratified(path) -> StratifiedModel:
    with open(path, encoding="utf-8") as fh:
        sections = _split_sections(fh.read(), _STRAT_HEADER)

    prov = {}
    for ln in _require(sections, "provenance"):
        key, _, value = ln.partition("=")
        prov[key] = value
    raw_cfg = json.loads(_require(sections, "config")[0])
    cfg = StratifyConfig(
        n_global=raw_cfg["n_global"], n_local=raw_cfg["n_local"],
        n_clusters=raw_cfg["n_clusters"], lda_alpha=raw_cfg["lda_alpha"],
        lda_beta=raw_cfg["lda_beta"], gibbs_iterations=raw_cfg["gibbs_iterations"],
        fold_in_iterations=raw_cfg["fold_in_iterations"], seed=raw_cfg["seed"])

    schema_lines = _require(sections, "schema")
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

    gp_lines = _require(sections, "global_patterns")
    count = int(gp_lines[0].split("=", 1)[1])
    machine = [ln for ln in gp_lines[1:] if not ln.startswith("#")]
    if len(machine) != count:
        raise ValueError("truncated model file: section 'global_patterns' is incomplete")
    global_patterns = [_parse_pattern_line(ln) for ln in machine]

    topics = np.array([[float.fromhex(tok) for tok in ln.split()]
                       for ln in _require(sections, "topics")])

    cluster_patterns: list[list[Pattern]] = []
    pending = 0
    for ln in _require(sections, "cluster_patterns"):
        if ln.startswith("cluster="):
            if pending:
                raise ValueError("truncated model file: section 'cluster_patterns' is incomplete")
            pending = int(ln.split("count=", 1)[1])
            cluster_patterns.append([])
        elif ln.startswith("#"):
            continue
        else:
            cluster_patterns[-1].append(_parse_pattern_line(ln))
            pending -= 1
    if pending:
        raise ValueError("truncated model file: section 'cluster_patterns' is incomplete")

    glm_kv = {}
    weights_rows = []
    intercepts = None
    for ln in _require(sections, "glm"):
        if ln.startswith("intercept "):
            intercepts = [float.fromhex(tok) for tok in ln.split()[1:]]
        elif ln.startswith("weights "):
            weights_rows.append([float.fromhex(tok) for tok in ln.split()[1:]])
        else:
            key, _, value = ln.partition("=")
            glm_kv[key] = value
    if intercepts is None or not weights_rows:
        raise ValueError("truncated model file: section 'glm' is missing weights")
    classes = int(glm_kv.get("classes", 0))
    if len(weights_rows) == 1 and classes <= 2:
        glm = GlmModel(weights=np.array(weights_rows[0]), intercept=intercepts[0],
                       task=glm_kv["task"], classes=classes)
    else:
        glm = GlmModel(weights=np.array(weights_rows), intercept=np.array(intercepts),
                       task=glm_kv["task"], classes=classes)

    return StratifiedModel(
        global_patterns=global_patterns,
        topics=topics,
        cluster_patterns=cluster_patterns,
        glm=glm,
        cluster_assignments=np.zeros(0, dtype=np.int64),
        config=cfg,
        schema=schema,
        feature_names=feature_names,
        feature_sources=feature_sources,
        label_kind=label_kind,
        label_names=label_names,
        label_bounds=label_bounds,
        provenance=prov,
    )
