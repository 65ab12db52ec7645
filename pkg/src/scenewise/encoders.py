"""Statement, scene, and script encoders and their three-tier composition.

Four encoder kinds share one interface: a bag-of-embeddings mean (BoE), an
attention-weighted bag (BoE+Attn), a bidirectional GRU taking its final
output (GRU), and an attention pooling over GRU outputs (GRU+Attn).
Attention scores one vector per input with a learned vector ``p``; the
default normalization is a softmax over the scores, and a strictly linear
normalization ``a_i = s_i / sum_j s_j`` is available as ``paper_linear``.

The hierarchical composition encodes action statements and dialogue
statements through separate statement and scene encoders, optionally
appends a mean character embedding per scene, and feeds the scene-embedding
sequence to a script encoder of the same kind.  Structural variants replace
or drop tiers:

* ``full`` / ``plus_chars`` — both channels, character block included
* ``minus_action`` / ``minus_dialogue`` — one channel dropped entirely
* ``two_tier`` — per-channel word sequences go straight to scene encoders
* ``han`` — one statement and one scene encoder over all statements in
  their original interleaved order
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import TokenVectors, tokenize
from .errors import EmptyScript, EmptyStatement, ShapeMismatch
from .parser import Scene, Screenplay


class EncoderKind(Enum):
    BOE = "boe"
    BOE_ATTN = "boe_attn"
    GRU = "gru"
    GRU_ATTN = "gru_attn"


SOFTMAX = "softmax"
PAPER_LINEAR = "paper_linear"


@dataclass(frozen=True)
class EncoderSpec:
    kind: EncoderKind
    input_dim: int = 100
    hidden_per_direction: int = 50
    attention_dim: int = 100
    attention_normalization: str = SOFTMAX

    @property
    def output_dim(self) -> int:
        if self.kind in (EncoderKind.BOE, EncoderKind.BOE_ATTN):
            return self.input_dim
        return 2 * self.hidden_per_direction

    @property
    def attended_dim(self) -> int:
        """Dimensionality of the vectors attention is computed over."""
        if self.kind is EncoderKind.BOE_ATTN:
            return self.input_dim
        return 2 * self.hidden_per_direction


def attend(outputs: Tensor, p: Tensor,
           normalization: str = SOFTMAX) -> tuple[Tensor, Tensor]:
    """Pool a (T, H) matrix of outputs with attention vector ``p``.

    Returns the pooled vector and the weights.  ``softmax`` normalizes
    scores with a softmax; ``paper_linear`` divides each score by the sum of
    scores, exactly as a linear normalization (weights may then be negative
    and the sum may be degenerate).
    """
    if outputs.data.ndim != 2 or p.data.ndim != 1 \
            or outputs.data.shape[1] != p.data.shape[0]:
        raise ShapeMismatch(f"attend: {outputs.data.shape} vs {p.data.shape}")
    scores = ad.matmul(outputs, p)
    if normalization == SOFTMAX:
        weights = ad.softmax(scores)
    elif normalization == PAPER_LINEAR:
        weights = ad.normalize_sum(scores)
    else:
        raise ValueError(f"unknown attention normalization {normalization!r}")
    pooled = ad.matmul(weights, outputs)
    return pooled, weights


class SequenceEncoder:
    """One encoder instance with its parameters."""

    def __init__(self, spec: EncoderSpec, rng: np.random.Generator):
        self.spec = spec
        self.gru = None
        self.p = None
        if spec.kind in (EncoderKind.GRU, EncoderKind.GRU_ATTN):
            self.gru = ad.init_bi_gru(rng, spec.input_dim, spec.hidden_per_direction)
        if spec.kind in (EncoderKind.BOE_ATTN, EncoderKind.GRU_ATTN):
            if spec.attention_dim != spec.attended_dim:
                raise ShapeMismatch(
                    f"attention_dim ({spec.attention_dim},) must match attended "
                    f"outputs ({spec.attended_dim},)")
            self.p = ad.parameter(ad.glorot(rng, (spec.attention_dim,)))

    @property
    def output_dim(self) -> int:
        return self.spec.output_dim

    def encode_with_weights(self, xs: Tensor) -> tuple[Tensor, Tensor | None]:
        kind = self.spec.kind
        if kind is EncoderKind.BOE:
            return ad.mean_rows(xs), None
        if kind is EncoderKind.BOE_ATTN:
            pooled, weights = attend(xs, self.p, self.spec.attention_normalization)
            return pooled, weights
        outputs, final = ad.bi_gru(xs, self.gru)
        if kind is EncoderKind.GRU:
            return final, None
        pooled, weights = attend(ad.stack(outputs), self.p,
                                 self.spec.attention_normalization)
        return pooled, weights

    def encode(self, xs: Tensor) -> Tensor:
        return self.encode_with_weights(xs)[0]

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.gru is not None:
            out.update(self.gru.named(f"{prefix}.gru"))
        if self.p is not None:
            out[f"{prefix}.p"] = self.p
        return out


def encode_statement(tokens: list[str], vectors: TokenVectors,
                     encoder: SequenceEncoder) -> Tensor:
    """Encode one statement's tokens; raises EmptyStatement on zero tokens."""
    if not tokens:
        raise EmptyStatement("statement has no tokens")
    return encoder.encode(ad.constant(vectors.rows(tokens)))


class CharacterTable:
    """Per-character trainable embeddings; unseen names share an UNK row."""

    UNK_NAME = "<unk-char>"

    def __init__(self, names: list[str], dim: int = 10,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.embeddings = {name: ad.parameter(rng.normal(0.0, 0.1, size=dim))
                           for name in [self.UNK_NAME] + sorted(set(names))}

    def vector(self, name: str) -> Tensor:
        return self.embeddings.get(name, self.embeddings[self.UNK_NAME])

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{name}": t for name, t in self.embeddings.items()}


class Variant(Enum):
    FULL = "full"
    PLUS_CHARS = "plus_chars"
    MINUS_ACTION = "minus_action"
    MINUS_DIALOGUE = "minus_dialogue"
    TWO_TIER = "two_tier"
    HAN = "han"


_CHANNEL_VARIANTS = {
    Variant.FULL: ("action", "dialogue"),
    Variant.PLUS_CHARS: ("action", "dialogue"),
    Variant.MINUS_ACTION: ("dialogue",),
    Variant.MINUS_DIALOGUE: ("action",),
    Variant.TWO_TIER: ("action", "dialogue"),
    Variant.HAN: ("content",),
}


@dataclass
class SceneEmbedding:
    """Concatenated scene vector plus the block layout used to build it."""

    vector: Tensor
    blocks: dict[str, tuple[int, int]]

    def block(self, name: str) -> np.ndarray:
        lo, hi = self.blocks[name]
        return self.vector.data[lo:hi]


class HierarchicalModel:
    """Three-tier script encoder over parsed screenplays."""

    def __init__(self, spec: EncoderSpec, variant: Variant,
                 vectors: TokenVectors, characters: list[str],
                 include_chars: bool | None = None, char_dim: int = 10,
                 seed: int = 0):
        if include_chars is None:
            include_chars = variant in (Variant.FULL, Variant.PLUS_CHARS)
        if variant is Variant.PLUS_CHARS:
            include_chars = True
        self.spec = spec
        self.variant = variant
        self.vectors = vectors
        self.include_chars = include_chars
        self.char_dim = char_dim
        self.seed = seed
        rng = np.random.default_rng(seed)

        word_dim = vectors.dim
        stmt_spec = replace(spec, input_dim=word_dim)
        stmt_spec = replace(stmt_spec, attention_dim=stmt_spec.attended_dim)
        scene_spec = replace(spec, input_dim=stmt_spec.output_dim)
        scene_spec = replace(scene_spec, attention_dim=scene_spec.attended_dim)
        word_scene_spec = replace(spec, input_dim=word_dim)
        word_scene_spec = replace(word_scene_spec,
                                  attention_dim=word_scene_spec.attended_dim)

        self.statement_encoders: dict[str, SequenceEncoder] = {}
        self.scene_encoders: dict[str, SequenceEncoder] = {}
        for channel in _CHANNEL_VARIANTS[variant]:
            if variant is Variant.TWO_TIER:
                self.scene_encoders[channel] = SequenceEncoder(word_scene_spec, rng)
            else:
                self.statement_encoders[channel] = SequenceEncoder(stmt_spec, rng)
                self.scene_encoders[channel] = SequenceEncoder(scene_spec, rng)

        self.char_table = CharacterTable(characters, dim=char_dim, rng=rng) \
            if include_chars else None

        layout: list[tuple[str, int]] = []
        for channel in _CHANNEL_VARIANTS[variant]:
            layout.append((channel, self.scene_encoders[channel].output_dim))
        if include_chars:
            layout.append(("characters", char_dim))
        self.block_layout = tuple(layout)

        script_spec = replace(spec, input_dim=self.scene_dim)
        script_spec = replace(script_spec, attention_dim=script_spec.attended_dim)
        self.script_encoder = SequenceEncoder(script_spec, rng)

    @property
    def scene_dim(self) -> int:
        return sum(dim for _, dim in self.block_layout)

    @property
    def script_dim(self) -> int:
        return self.script_encoder.output_dim

    def _channel_statements(self, scene: Scene, channel: str) -> list[list[str]]:
        if channel == "action":
            texts = scene.action_statements
        elif channel == "dialogue":
            texts = [text for _, text in scene.dialogue_statements]
        else:  # han content: interleaved original order
            texts = [s.text for s in scene.statements]
        return [toks for toks in (tokenize(t) for t in texts) if toks]

    def _encode_channel(self, scene: Scene, channel: str) -> Tensor:
        stmts = self._channel_statements(scene, channel)
        scene_enc = self.scene_encoders[channel]
        if self.variant is Variant.TWO_TIER:
            tokens = [tok for stmt in stmts for tok in stmt]
            if not tokens:
                return ad.constant(np.zeros(scene_enc.output_dim))
            return scene_enc.encode(ad.constant(self.vectors.rows(tokens)))
        if not stmts:
            return ad.constant(np.zeros(scene_enc.output_dim))
        stmt_enc = self.statement_encoders[channel]
        stmt_vecs = [encode_statement(toks, self.vectors, stmt_enc) for toks in stmts]
        return scene_enc.encode(ad.stack(stmt_vecs))

    def _encode_characters(self, scene: Scene) -> Tensor:
        names = sorted(scene.characters)
        if not names:
            return ad.constant(np.zeros(self.char_dim))
        rows = ad.stack([self.char_table.vector(n) for n in names])
        return ad.mean_rows(rows)

    def encode_scene(self, scene: Scene) -> SceneEmbedding:
        parts: list[Tensor] = []
        blocks: dict[str, tuple[int, int]] = {}
        offset = 0
        for name, dim in self.block_layout:
            if name == "characters":
                part = self._encode_characters(scene)
            else:
                part = self._encode_channel(scene, name)
            parts.append(part)
            blocks[name] = (offset, offset + dim)
            offset += dim
        return SceneEmbedding(vector=ad.concat(parts), blocks=blocks)

    def encode_script(self, screenplay: Screenplay) -> Tensor:
        if not screenplay.scenes:
            raise EmptyScript(f"{screenplay.title}: no scenes to encode")
        scene_vecs = [self.encode_scene(s).vector for s in screenplay.scenes]
        return self.script_encoder.encode(ad.stack(scene_vecs))

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for channel, enc in self.statement_encoders.items():
            out.update(enc.named_params(f"{channel}_stmt"))
        for channel, enc in self.scene_encoders.items():
            out.update(enc.named_params(f"{channel}_scene"))
        out.update(self.script_encoder.named_params("script"))
        if self.char_table is not None:
            out.update(self.char_table.named_params("chars"))
        return out

    def to_config(self) -> dict:
        return {
            "variant": self.variant.value,
            "include_chars": self.include_chars,
            "kind": self.spec.kind.value,
            "input_dim": self.spec.input_dim,
            "hidden_per_direction": self.spec.hidden_per_direction,
            "attention_normalization": self.spec.attention_normalization,
            "char_dim": self.char_dim,
            "characters": sorted(self.char_table.embeddings)
            if self.char_table else [],
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, config: dict, vectors: TokenVectors) -> "HierarchicalModel":
        kind = EncoderKind(config["kind"])
        spec = EncoderSpec(
            kind=kind,
            input_dim=config["input_dim"],
            hidden_per_direction=config["hidden_per_direction"],
            attention_dim=config["input_dim"] if kind is EncoderKind.BOE_ATTN
            else 2 * config["hidden_per_direction"],
            attention_normalization=config["attention_normalization"],
        )
        names = [n for n in config["characters"] if n != CharacterTable.UNK_NAME]
        return cls(spec=spec, variant=Variant(config["variant"]), vectors=vectors,
                   characters=names, include_chars=config["include_chars"],
                   char_dim=config["char_dim"], seed=config["seed"])


def build_variant(flag: Variant | str, vectors: TokenVectors,
                  characters: list[str], spec: EncoderSpec | None = None,
                  include_chars: bool | None = None, char_dim: int = 10,
                  seed: int = 0) -> HierarchicalModel:
    """Construct the hierarchical model for one structural variant.

    ``full`` and ``plus_chars`` include the character block by default;
    the other variants exclude it unless ``include_chars`` forces it on.
    """
    variant = Variant(flag) if isinstance(flag, str) else flag
    if spec is None:
        spec = EncoderSpec(kind=EncoderKind.GRU_ATTN, input_dim=vectors.dim)
    return HierarchicalModel(spec=spec, variant=variant, vectors=vectors,
                             characters=characters, include_chars=include_chars,
                             char_dim=char_dim, seed=seed)
