"""Threshold-rule conjunctions and their extraction from grown trees.

Every split in a tree contributes one candidate rule: the conjunction of
edge conditions on the path from the root down to that split, closed with
the split's own >= condition. A rule therefore holds for an instance
exactly when routing the instance reaches the split and takes its >= side,
which is what the routing-consistency tests assert.
"""

from dataclasses import dataclass

import numpy as np

OP_LT = "lt"
OP_GE = "ge"


@dataclass(frozen=True)
class Condition:
    """One thresholded test on a feature dimension: x[dim] < t or x[dim] >= t."""

    dim: int
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in (OP_LT, OP_GE):
            raise ValueError(f"unknown condition operator {self.op!r}")

    def holds(self, value: float) -> bool:
        if self.op == OP_LT:
            return value < self.threshold
        return value >= self.threshold


@dataclass(frozen=True)
class Pattern:
    """A conjunction of conditions, kept in canonical-comparable order."""

    conditions: tuple[Condition, ...]

    def __post_init__(self):
        if len(self.conditions) == 0:
            raise ValueError("a pattern needs at least one condition")

    @property
    def m(self) -> int:
        return len(self.conditions)


class ConditionCounter:
    """Counts condition evaluations; used to audit prediction cost."""

    def __init__(self):
        self.count = 0


def canonicalize(pattern: Pattern) -> Pattern:
    """Keep the tightest bound per (dim, op) and order conditions deterministically."""
    tight: dict[tuple[int, str], float] = {}
    for c in pattern.conditions:
        key = (c.dim, c.op)
        if key not in tight:
            tight[key] = c.threshold
        elif c.op == OP_LT:
            tight[key] = min(tight[key], c.threshold)
        else:
            tight[key] = max(tight[key], c.threshold)
    ordered = tuple(
        Condition(dim, op, thr)
        for (dim, op), thr in sorted(tight.items())
    )
    return Pattern(ordered)


def matches(pattern: Pattern, x: np.ndarray, counter: ConditionCounter | None = None) -> bool:
    """True iff every condition of ``pattern`` holds for the feature vector."""
    d = len(x)
    for c in pattern.conditions:
        if not 0 <= c.dim < d:
            raise IndexError(f"condition dimension {c.dim} outside feature vector of length {d}")
        if counter is not None:
            counter.count += 1
        if not c.holds(x[c.dim]):
            return False
    return True


@dataclass
class PatternPool:
    """Deduplicated candidate rules with their tree-bag coverage counts."""

    patterns: list[Pattern]
    source_counts: list[int]

    def __len__(self) -> int:
        return len(self.patterns)


def tree_patterns(tree) -> list[tuple[Pattern, object]]:
    """Per-split rules of one tree, paired with the >=-side child they describe.

    An instance satisfies the rule iff routing it through the tree visits
    that child node.
    """
    out = []

    def walk(node, path):
        if node.is_leaf:
            return
        closing = Condition(node.dim, OP_GE, node.threshold)
        out.append((canonicalize(Pattern(tuple(path) + (closing,))), node.right))
        walk(node.left, path + [Condition(node.dim, OP_LT, node.threshold)])
        walk(node.right, path + [closing])

    walk(tree.root, [])
    return out


def extract_patterns(forest) -> PatternPool:
    """Pool the per-split rules of every tree, deduplicated by canonical form."""
    if not forest:
        raise ValueError("cannot extract patterns from an empty forest")
    seen: dict[Pattern, int] = {}
    counts: list[int] = []
    ordered: list[Pattern] = []
    for tree in forest:
        for pattern, child in tree_patterns(tree):
            if pattern not in seen:
                seen[pattern] = len(ordered)
                ordered.append(pattern)
                counts.append(int(child.bag_size))
    return PatternPool(patterns=ordered, source_counts=counts)


def pattern_matrix(x: np.ndarray, patterns: list[Pattern]) -> np.ndarray:
    """Binary matrix whose (i, j) entry says instance i satisfies pattern j."""
    n = x.shape[0]
    out = np.zeros((n, len(patterns)), dtype=np.uint8)
    for j, p in enumerate(patterns):
        mask = np.ones(n, dtype=bool)
        for c in p.conditions:
            col = x[:, c.dim]
            mask &= (col < c.threshold) if c.op == OP_LT else (col >= c.threshold)
        out[:, j] = mask
    return out


def construct_pattern_space(ds, patterns: list[Pattern]) -> np.ndarray:
    for p in patterns:
        for c in p.conditions:
            if not 0 <= c.dim < ds.d:
                raise IndexError(f"condition dimension {c.dim} outside dataset with d={ds.d}")
    return pattern_matrix(ds.x, patterns)


def render_condition(c: Condition, feature_names: list[str]) -> str:
    name = feature_names[c.dim] if 0 <= c.dim < len(feature_names) else f"x{c.dim}"
    op = "<" if c.op == OP_LT else ">="
    return f"({name} {op} {c.threshold:.6g})"


def render_pattern(p: Pattern, feature_names: list[str]) -> str:
    return " AND ".join(render_condition(c, feature_names) for c in p.conditions)
