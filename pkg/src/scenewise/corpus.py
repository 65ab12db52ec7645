"""Corpus ingestion, vocabulary construction, dataset splitting, and the
synthetic-screenplay generator used by the test and acceptance suites.

File formats owned here:

* scripts: one UTF-8 plain-text screenplay per ``*.txt`` file, title = stem
* tags: JSON ``{title: {attribute: [tag, ...]}}``
* loglines: JSON ``{title: text}``
* embeddings: text lines ``token v1 .. v100`` (GloVe textual layout)
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import parser
from .errors import EmbeddingDimMismatch, EmptyScript, MissingTags
from .ioutil import atomic_write_text, canonical_json, config_hash, sha256_hex
from .parser import Scene, Screenplay

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9']+")

UNK_TOKEN = "<unk>"


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace/punctuation tokenization."""
    return _TOKEN_RE.findall(text.lower())


def scene_tokens(scene: Scene) -> list[str]:
    """All statement tokens of a scene in original interleaved order."""
    tokens: list[str] = []
    for stmt in scene.statements:
        tokens.extend(tokenize(stmt.text))
    return tokens


# ---------------------------------------------------------------------------
# vocabulary and embeddings


class Vocabulary:
    """Corpus token inventory with a minimum-count threshold."""

    def __init__(self, tokens: list[str] | tuple[str, ...], min_count: int):
        self.tokens = tuple(sorted(tokens))
        self.min_count = min_count
        self._set = frozenset(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._set

    def __len__(self) -> int:
        return len(self.tokens)

    def map(self, token: str) -> str:
        return token if token in self._set else UNK_TOKEN

    def hash(self) -> str:
        return sha256_hex("\n".join(self.tokens))


def build_vocabulary(screenplays: list[Screenplay], min_count: int = 5) -> Vocabulary:
    counts: Counter[str] = Counter()
    for sp in screenplays:
        for scene in sp.scenes:
            counts.update(scene_tokens(scene))
    kept = [tok for tok, c in counts.items() if c >= min_count]
    return Vocabulary(kept, min_count)


def descriptor_vocabulary(screenplays: list[Screenplay], min_movies: int = 50,
                          exclude_top: int = 500) -> tuple[str, ...]:
    """Tokens occurring in at least ``min_movies`` scripts, outside the
    ``exclude_top`` most frequent tokens."""
    doc_freq: Counter[str] = Counter()
    total: Counter[str] = Counter()
    for sp in screenplays:
        seen: set[str] = set()
        for scene in sp.scenes:
            toks = scene_tokens(scene)
            total.update(toks)
            seen.update(toks)
        doc_freq.update(seen)
    by_frequency = sorted(total, key=lambda t: (-total[t], t))
    top = set(by_frequency[:exclude_top])
    kept = [t for t in sorted(doc_freq) if doc_freq[t] >= min_movies and t not in top]
    return tuple(kept)


class WordEmbeddings:
    """Pretrained token vectors; unknown tokens map to the mean vector."""

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self.dim = dim
        self.table = table
        if UNK_TOKEN in table:
            self.unk = table[UNK_TOKEN]
        elif table:
            self.unk = np.mean(list(table.values()), axis=0)
        else:
            self.unk = np.zeros(dim)

    @classmethod
    def load(cls, path: str | Path, expected_dim: int = 100) -> "WordEmbeddings":
        table: dict[str, np.ndarray] = {}
        dim: int | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split()
                if not parts:
                    continue
                token, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                    if expected_dim is not None and dim != expected_dim:
                        raise EmbeddingDimMismatch(
                            f"{path}: embedding dim {dim}, expected {expected_dim}")
                elif len(values) != dim:
                    raise EmbeddingDimMismatch(
                        f"{path}: inconsistent row width for {token!r}")
                table[token] = np.asarray([float(v) for v in values])
        return cls(table, dim if dim is not None else expected_dim)

    def vector(self, token: str) -> np.ndarray:
        return self.table.get(token, self.unk)

    def __contains__(self, token: str) -> bool:
        return token in self.table

    def matrix(self, tokens: list[str] | tuple[str, ...]) -> np.ndarray:
        return np.stack([self.vector(t) for t in tokens]) if tokens else \
            np.zeros((0, self.dim))


@dataclass
class TokenVectors:
    """Vocabulary-filtered embedding lookup used by the encoders."""

    vocabulary: Vocabulary
    embeddings: WordEmbeddings

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    def rows(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([
            self.embeddings.vector(t) if t in self.vocabulary else self.embeddings.unk
            for t in tokens])


# ---------------------------------------------------------------------------
# corpus


@dataclass
class CorpusItem:
    title: str
    screenplay: Screenplay
    tags: dict[str, tuple[str, ...]]
    logline: str | None = None


@dataclass(frozen=True)
class IngestConfig:
    min_count: int = 5
    cap: int = 60
    heldout_fraction: float = 0.2
    validation_fraction: float = 0.1
    seed: int = 0
    descriptor_min_movies: int = 50
    descriptor_top_exclude: int = 500
    expected_dim: int = 100
    workers: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Corpus:
    items: list[CorpusItem]
    split: dict[str, str]
    vocabulary: Vocabulary
    embeddings: WordEmbeddings
    descriptor_vocab: tuple[str, ...] = ()
    config: IngestConfig = field(default_factory=IngestConfig)

    def _by_split(self, name: str) -> list[CorpusItem]:
        return [it for it in self.items if self.split[it.title] == name]

    @property
    def train_items(self) -> list[CorpusItem]:
        return self._by_split("train")

    @property
    def validation_items(self) -> list[CorpusItem]:
        return self._by_split("validation")

    @property
    def heldout_items(self) -> list[CorpusItem]:
        return self._by_split("heldout")

    def vectors(self) -> TokenVectors:
        return TokenVectors(self.vocabulary, self.embeddings)

    def characters(self) -> list[str]:
        """Distinct speaking characters over the training portion."""
        names: set[str] = set()
        for it in self.train_items + self.validation_items:
            for scene in it.screenplay.scenes:
                names.update(scene.characters)
        return sorted(names)


def split_titles(titles: list[str], heldout_fraction: float,
                 validation_fraction: float, seed: int) -> dict[str, str]:
    """Deterministic seeded split, independent of input order."""
    ordered = sorted(titles)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_heldout = int(round(len(ordered) * heldout_fraction))
    heldout = {ordered[i] for i in perm[:n_heldout]}
    rest = [ordered[i] for i in perm[n_heldout:]]
    n_val = int(round(len(rest) * validation_fraction))
    validation = set(rest[:n_val])
    out: dict[str, str] = {}
    for title in ordered:
        if title in heldout:
            out[title] = "heldout"
        elif title in validation:
            out[title] = "validation"
        else:
            out[title] = "train"
    return out


def load_tags(path: str | Path) -> dict[str, dict[str, tuple[str, ...]]]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {title: {attr: tuple(vals) for attr, vals in attrs.items()}
            for title, attrs in raw.items()}


def load_loglines(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return dict(json.load(fh))


def ingest(scripts_dir: str | Path, tags_path: str | Path,
           embeddings_path: str | Path, config: IngestConfig = IngestConfig(),
           loglines_path: str | Path | None = None) -> tuple[Corpus, dict]:
    """Parse, filter, split, and index a script directory.

    Returns the corpus plus a manifest recording the split assignment and
    every exclusion with its reason.
    """
    scripts_dir = Path(scripts_dir)
    tags = load_tags(tags_path)
    loglines = load_loglines(loglines_path) if loglines_path else {}
    embeddings = WordEmbeddings.load(embeddings_path, expected_dim=config.expected_dim)

    paths = sorted(scripts_dir.glob("*.txt"))
    excluded: list[dict] = []
    parsed: list[CorpusItem] = []

    def parse_one(path: Path) -> tuple[str, Screenplay | None, str | None]:
        title = path.stem
        try:
            play = parser.parse_script(title, path.read_text(encoding="utf-8"),
                                       cap=config.cap)
        except EmptyScript as err:
            return title, None, f"empty: {err}"
        return title, play, None

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        results = list(pool.map(parse_one, paths))

    for title, play, reason in results:
        if play is None:
            excluded.append({"title": title, "reason": reason})
            continue
        n_action = sum(len(s.action_statements) for s in play.scenes)
        n_dialogue = sum(len(s.dialogue_statements) for s in play.scenes)
        if n_action == 0 and n_dialogue == 0:
            excluded.append({"title": title, "reason": "no usable statements"})
            continue
        if title not in tags:
            excluded.append({"title": title, "reason": "missing tags"})
            log.warning("skipping %s: %s", title, MissingTags(title))
            continue
        parsed.append(CorpusItem(title=title, screenplay=play, tags=tags[title],
                                 logline=loglines.get(title)))

    parsed.sort(key=lambda it: it.title)
    split = split_titles([it.title for it in parsed], config.heldout_fraction,
                         config.validation_fraction, config.seed)
    train_plays = [it.screenplay for it in parsed
                   if split[it.title] in ("train", "validation")]
    vocabulary = build_vocabulary([it.screenplay for it in parsed],
                                  min_count=config.min_count)
    desc_vocab = descriptor_vocabulary(train_plays,
                                       min_movies=config.descriptor_min_movies,
                                       exclude_top=config.descriptor_top_exclude)
    corpus = Corpus(items=parsed, split=split, vocabulary=vocabulary,
                    embeddings=embeddings, descriptor_vocab=desc_vocab,
                    config=config)
    manifest = {
        "config": config.to_dict(),
        "config_hash": config_hash(config.to_dict()),
        "splits": {name: sorted(it.title for it in corpus._by_split(name))
                   for name in ("train", "validation", "heldout")},
        "excluded": excluded,
        "vocabulary_size": len(vocabulary),
        "vocabulary_hash": vocabulary.hash(),
        "descriptor_vocabulary_size": len(desc_vocab),
    }
    return corpus, manifest


# ---------------------------------------------------------------------------
# synthetic corpus generator

FILLER_WORDS = (
    "the a walks into room looks at door and turns slowly while light "
    "falls across floor then she he waits near window before speaking again"
).split()

TOPIC_NAMES = ("ember", "frost", "raven", "sol", "vale", "onyx", "iris", "moss")

CHARACTER_POOL = ("ALEX", "BLAKE", "CASEY", "DEVON", "EMERY", "FINLEY",
                  "GREER", "HOLLIS")

ORDER_TOKENS = ("riddlea", "riddleb", "riddlec")


@dataclass(frozen=True)
class SynthSpec:
    n_scripts: int = 40
    n_tags: int = 3
    signal: float = 0.8
    seed: int = 0
    order_sensitive: bool = False
    attribute: str = "genre"
    scenes_range: tuple[int, int] = (5, 8)
    statements_range: tuple[int, int] = (4, 7)
    markers_per_tag: int = 12
    marker_spread: float = 0.25
    noise_vocab: int = 30
    embedding_dim: int = 100

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenes_range"] = list(self.scenes_range)
        d["statements_range"] = list(self.statements_range)
        return d


def _topic_markers(spec: SynthSpec) -> dict[str, list[str]]:
    names = TOPIC_NAMES[:spec.n_tags]
    return {name: [f"{name}{j:02d}" for j in range(spec.markers_per_tag)]
            for name in names}


def _synthetic_embeddings(spec: SynthSpec, markers: dict[str, list[str]],
                          rng: np.random.Generator) -> dict[str, np.ndarray]:
    dim = spec.embedding_dim
    table: dict[str, np.ndarray] = {}
    block = max(4, dim // (spec.n_tags + len(ORDER_TOKENS) + 1))
    for t, (topic, words) in enumerate(sorted(markers.items())):
        direction = np.zeros(dim)
        lo = (t * block) % dim
        direction[lo:lo + block] = 1.0 / np.sqrt(block)
        # noise-vector norm ~= marker_spread relative to the unit topic direction
        for w in words:
            table[w] = direction + rng.normal(
                0.0, spec.marker_spread / np.sqrt(dim), size=dim)
    for i, tok in enumerate(ORDER_TOKENS):
        direction = np.zeros(dim)
        lo = ((spec.n_tags + i) * block) % dim
        direction[lo:lo + block] = 1.0 / np.sqrt(block)
        table[tok] = direction + rng.normal(0.0, 0.03, size=dim)
    for j in range(spec.noise_vocab):
        vec = rng.normal(0.0, 1.0, size=dim)
        table[f"drift{j:02d}"] = vec / np.linalg.norm(vec)
    for w in FILLER_WORDS:
        table[w] = rng.normal(0.0, 0.05, size=dim)
    return table


def _sentence(rng: np.random.Generator, n_words: int) -> list[str]:
    return [FILLER_WORDS[i] for i in rng.integers(0, len(FILLER_WORDS), n_words)]


def generate_synthetic_corpus(out_dir: str | Path, spec: SynthSpec = SynthSpec()) -> dict:
    """Write a synthetic corpus: scripts, tags, loglines, embeddings, tag
    embeddings, and a ground-truth record of the planted topics."""
    if spec.n_tags < 2:
        raise ValueError("need at least 2 tags")
    out = Path(out_dir)
    scripts_dir = out / "scripts"
    scripts_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    markers = _topic_markers(spec)
    topic_list = sorted(markers)
    table = _synthetic_embeddings(spec, markers, rng)

    tags_json: dict[str, dict[str, list[str]]] = {}
    loglines_json: dict[str, str] = {}

    for idx in range(spec.n_scripts):
        title = f"synth{idx:03d}"
        primary = topic_list[idx % len(topic_list)]
        assigned = [primary]
        if not spec.order_sensitive and rng.random() < 0.3:
            extra = topic_list[int(rng.integers(0, len(topic_list)))]
            if extra != primary:
                assigned.append(extra)
        cast = [CHARACTER_POOL[i] for i in
                rng.choice(len(CHARACTER_POOL), size=2, replace=False)]
        n_scenes = int(rng.integers(spec.scenes_range[0], spec.scenes_range[1] + 1))
        lines: list[str] = []
        for s in range(n_scenes):
            place = "INT." if s % 2 == 0 else "EXT."
            lines.append(f"{place} LOCATION {s + 1} - DAY")
            lines.append("")
            n_statements = int(rng.integers(spec.statements_range[0],
                                            spec.statements_range[1] + 1))
            statements: list[list[str]] = []
            kinds: list[str] = []
            for _ in range(n_statements):
                words = _sentence(rng, int(rng.integers(4, 9)))
                statements.append(words)
                kinds.append("dialogue" if rng.random() < 0.5 else "action")
            if spec.noise_vocab:
                for _ in range(int(rng.integers(1, 3))):
                    target = int(rng.integers(0, n_statements))
                    pos = int(rng.integers(0, len(statements[target]) + 1))
                    tok = f"drift{int(rng.integers(0, spec.noise_vocab)):02d}"
                    statements[target].insert(pos, tok)
            for tag in assigned:
                if rng.random() >= spec.signal:
                    continue
                target = int(rng.integers(0, n_statements))
                pos = int(rng.integers(0, len(statements[target]) + 1))
                if spec.order_sensitive:
                    shift = topic_list.index(tag)
                    seq = list(ORDER_TOKENS[shift:] + ORDER_TOKENS[:shift])
                    statements[target][pos:pos] = seq
                else:
                    picks = rng.choice(spec.markers_per_tag,
                                       size=int(rng.integers(2, 5)), replace=False)
                    statements[target][pos:pos] = [markers[tag][p] for p in sorted(picks)]
            for words, kind in zip(statements, kinds):
                text = " ".join(words)
                if kind == "dialogue":
                    who = cast[int(rng.integers(0, len(cast)))]
                    lines.append(" " * 20 + who)
                    lines.append(" " * 10 + text)
                else:
                    lines.append(text)
                lines.append("")
        atomic_write_text(scripts_dir / f"{title}.txt", "\n".join(lines) + "\n")
        tags_json[title] = {spec.attribute: sorted(assigned)}
        if spec.order_sensitive:
            shift = topic_list.index(primary)
            seq = " ".join(ORDER_TOKENS[shift:] + ORDER_TOKENS[:shift])
            loglines_json[title] = f"a story told in the order of {seq}"
        else:
            sample = markers[primary][:2]
            loglines_json[title] = f"a story about {sample[0]} and {sample[1]}"

    emb_lines = [f"{tok} " + " ".join(f"{v:.6f}" for v in vec)
                 for tok, vec in sorted(table.items())]
    atomic_write_text(out / "embeddings.txt", "\n".join(emb_lines) + "\n")
    atomic_write_text(out / "tags.json",
                      json.dumps(tags_json, indent=2, sort_keys=True) + "\n")
    atomic_write_text(out / "loglines.json",
                      json.dumps(loglines_json, indent=2, sort_keys=True) + "\n")

    tag_emb_lines = []
    for topic in topic_list:
        vec = np.mean([table[w] for w in markers[topic]], axis=0)
        tag_emb_lines.append(f"{spec.attribute}\t{topic}\t"
                             + " ".join(f"{v:.6f}" for v in vec))
    atomic_write_text(out / "tag_embeddings.tsv", "\n".join(tag_emb_lines) + "\n")

    truth = {
        "attribute": spec.attribute,
        "topics": {t: markers[t] for t in topic_list},
        "order_tokens": list(ORDER_TOKENS) if spec.order_sensitive else [],
        "noise_vocab": [f"drift{j:02d}" for j in range(spec.noise_vocab)],
        "filler_count": len(FILLER_WORDS),
        "spec": spec.to_dict(),
    }
    atomic_write_text(out / "truth.json",
                      json.dumps(truth, indent=2, sort_keys=True) + "\n")
    manifest = {
        "scripts_dir": str(scripts_dir),
        "tags": str(out / "tags.json"),
        "loglines": str(out / "loglines.json"),
        "embeddings": str(out / "embeddings.txt"),
        "tag_embeddings": str(out / "tag_embeddings.tsv"),
        "truth": str(out / "truth.json"),
        "spec": spec.to_dict(),
        "spec_hash": config_hash(spec.to_dict()),
    }
    atomic_write_text(out / "synth_manifest.json",
                      canonical_json(manifest) + "\n")
    return manifest
