"""Multi-label evaluation: exact micro-averaged F-1, similarity-thresholded
F-1 over a tag-embedding space, and taxonomy complexity analyses
(equivalence merging, perplexity, pair permutations).

Similarity percentiles use the strict empirical CDF over all unordered
distinct tag pairs of an attribute: a pair's percentile is the share of
pairs strictly less similar, and a tag paired with itself is the 100th
percentile.  Under this convention no distinct pair reaches 100, so a
cutoff of 100 reproduces exact matching; percentiles are monotone in
similarity, so similarity F-1 is nondecreasing as the cutoff drops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, InvalidDistribution, UnknownTag


@dataclass
class TagEmbeddingSpace:
    """Embeddings for one attribute's tags plus the pair-similarity distribution."""

    attribute: str
    tags: tuple[str, ...]
    vectors: np.ndarray
    similarities: np.ndarray = field(init=False)
    distances: np.ndarray = field(init=False)
    _pair_sims: np.ndarray = field(init=False)
    _index: dict = field(init=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        norms = np.linalg.norm(self.vectors, axis=1)
        safe = np.where(norms == 0, 1.0, norms)
        unit = self.vectors / safe[:, None]
        self.similarities = unit @ unit.T
        self.distances = 1.0 - self.similarities
        n = len(self.tags)
        iu = np.triu_indices(n, k=1)
        self._pair_sims = np.sort(self.similarities[iu])
        self._index = {t: i for i, t in enumerate(self.tags)}

    def __contains__(self, tag: str) -> bool:
        return tag in self._index

    def similarity(self, a: str, b: str) -> float:
        ia, ib = self._require(a), self._require(b)
        return float(self.similarities[ia, ib])

    def _require(self, tag: str) -> int:
        if tag not in self._index:
            raise UnknownTag(f"{tag!r} not in attribute {self.attribute!r}")
        return self._index[tag]

    def percentile(self, a: str, b: str) -> float:
        """Percentile of the pair's similarity within this attribute's pairs."""
        self._require(a)
        self._require(b)
        if a == b:
            return 100.0
        if self._pair_sims.size == 0:
            return 0.0
        s = self.similarity(a, b)
        below = int(np.searchsorted(self._pair_sims, s, side="left"))
        return 100.0 * below / self._pair_sims.size

    def pairs(self) -> list[tuple[str, str]]:
        n = len(self.tags)
        return [(self.tags[i], self.tags[j])
                for i in range(n) for j in range(i + 1, n)]


def load_tag_embeddings(path: str | Path) -> dict[str, TagEmbeddingSpace]:
    """Read ``attribute<TAB>tag<TAB>floats`` lines into per-attribute spaces."""
    groups: dict[str, list[tuple[str, np.ndarray]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            attribute, tag, values = line.split("\t")
            vec = np.asarray([float(v) for v in values.split()])
            groups.setdefault(attribute, []).append((tag, vec))
    spaces = {}
    for attribute, rows in groups.items():
        rows.sort(key=lambda kv: kv[0])
        spaces[attribute] = TagEmbeddingSpace(
            attribute=attribute, tags=tuple(t for t, _ in rows),
            vectors=np.stack([v for _, v in rows]))
    return spaces


# ---------------------------------------------------------------------------
# F-1


def _check_aligned(predictions: Mapping[str, set], gold: Mapping[str, set]) -> None:
    if set(predictions) != set(gold):
        raise ValueError("predictions and gold cover different script sets")


def micro_f1(predictions: Mapping[str, set], gold: Mapping[str, set]) -> float:
    """Micro-averaged F-1 over all (script, tag) decisions of one attribute."""
    _check_aligned(predictions, gold)
    tp = fp = fn = 0
    for key in gold:
        p, g = set(predictions[key]), set(gold[key])
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def similarity_f1(predictions: Mapping[str, set], gold: Mapping[str, set],
                  space: TagEmbeddingSpace, cutoff: float) -> float:
    """F-1 with similarity-thresholded matching.

    Per script, candidate (prediction, gold) pairs are visited by descending
    similarity (exact matches first on ties); a pair whose percentile
    reaches the cutoff consumes both sides as one true positive.  Leftover
    predictions are false positives, leftover gold tags false negatives.
    At cutoff 100 only exact matches qualify, reproducing ``micro_f1``.
    """
    _check_aligned(predictions, gold)
    tp = fp = fn = 0
    for key in sorted(gold):
        p, g = sorted(set(predictions[key])), sorted(set(gold[key]))
        candidates = sorted(
            ((space.similarity(a, b), a, b) for a in p for b in g),
            key=lambda t: (-t[0], t[1] != t[2], t[1], t[2]))
        matched_p: set[str] = set()
        matched_g: set[str] = set()
        for _, a, b in candidates:
            if a in matched_p or b in matched_g:
                continue
            if space.percentile(a, b) >= cutoff:
                matched_p.add(a)
                matched_g.add(b)
                tp += 1
        fp += len(p) - len(matched_p)
        fn += len(g) - len(matched_g)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


# ---------------------------------------------------------------------------
# taxonomy analyses


def merge_equivalents(space: TagEmbeddingSpace,
                      cutoff: float) -> tuple[tuple[str, ...], ...]:
    """Partition tags by transitively merging pairs at or above the cutoff."""
    parent = {t: t for t in space.tags}

    def find(t: str) -> str:
        while parent[t] != t:
            parent[t] = parent[parent[t]]
            t = parent[t]
        return t

    for a, b in space.pairs():
        if space.percentile(a, b) >= cutoff:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra
    classes: dict[str, list[str]] = {}
    for t in space.tags:
        classes.setdefault(find(t), []).append(t)
    return tuple(sorted(tuple(sorted(members)) for members in classes.values()))


def tag_perplexity(probabilities: Sequence[float]) -> float:
    """2 ** H of a tag distribution, with 0 * log 0 = 0."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidDistribution(
            f"probabilities must be nonnegative and sum to 1, got sum={p.sum()!r}")
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    return 2.0 ** entropy


def pair_permutations(n: int) -> int:
    """Number of ordered pairs of distinct tags: n! / (n-2)! = n (n - 1)."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    return n * (n - 1)


def merged_distribution(tag_counts: Mapping[str, float],
                        classes: Sequence[Sequence[str]] | None = None
                        ) -> np.ndarray:
    """Probabilities over tags (or merged classes) from corpus counts."""
    if classes is None:
        counts = np.asarray([tag_counts[t] for t in sorted(tag_counts)], float)
    else:
        counts = np.asarray([sum(tag_counts.get(t, 0) for t in members)
                             for members in classes], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise InvalidDistribution("no tag occurrences")
    return counts / total


def similarity_report(predictions: Mapping[str, set], gold: Mapping[str, set],
                      space: TagEmbeddingSpace, cutoffs: Sequence[float],
                      tag_counts: Mapping[str, float]) -> dict:
    """Cutoff sweep: F-1 plus perplexity/cardinality reductions vs cutoff 100."""
    base_classes = merge_equivalents(space, 100.0)
    base_perplexity = tag_perplexity(merged_distribution(tag_counts, base_classes))
    base_cardinality = len(base_classes)
    out: dict = {"attribute": space.attribute, "cutoffs": {}}
    for cutoff in cutoffs:
        classes = merge_equivalents(space, cutoff)
        perplexity = tag_perplexity(merged_distribution(tag_counts, classes))
        entry = {
            "f1": similarity_f1(predictions, gold, space, cutoff),
            "perplexity": perplexity,
            "cardinality": len(classes),
            "perplexity_reduction": 1.0 - perplexity / base_perplexity,
            "cardinality_reduction": 1.0 - len(classes) / base_cardinality,
        }
        out["cutoffs"][f"{cutoff:g}"] = entry
    return out
