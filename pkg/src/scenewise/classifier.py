"""Multi-label tag classification: reweighted loss, prediction heads,
training loop, and the loglines baseline.

The loss reweights each tag's negative term by the tag's ratio of positive
to negative training samples, so rare tags are not drowned out::

    L(y, z) = -(1/(N*L)) sum_ij [ y_ij log s(z_ij)
                                  + lam_j (1 - y_ij) log(1 - s(z_ij)) ]

computed via the stable log-sigmoid.  A literal transcription with the
``(1 - log s(z))`` negative term is available as ``form="printed"`` for
comparison; it is unbounded below under minimization and not used for
training.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, clip_grad_norm
from .corpus import CorpusItem, TokenVectors, tokenize
from .encoders import HierarchicalModel
from .errors import DataEmpty, MissingLogline, NonFiniteLoss, NoPositives
from .parser import Screenplay

log = logging.getLogger(__name__)

STABLE = "stable"
PRINTED = "printed"


@dataclass
class TagTaxonomy:
    """Per-attribute tag inventory with positive/negative reweighting ratios.

    Tags without at least one positive and one negative training script are
    deactivated: they contribute neither to the loss nor to evaluation.
    """

    attribute: str
    tags: tuple[str, ...]
    lam: np.ndarray
    active: np.ndarray

    @classmethod
    def from_items(cls, items: Sequence[CorpusItem], attribute: str) -> "TagTaxonomy":
        tags = tuple(sorted({t for it in items for t in it.tags.get(attribute, ())}))
        n = len(items)
        pos = np.zeros(len(tags))
        for it in items:
            present = set(it.tags.get(attribute, ()))
            for j, tag in enumerate(tags):
                if tag in present:
                    pos[j] += 1
        neg = n - pos
        active = (pos >= 1) & (neg >= 1)
        lam = np.where(active, pos / np.maximum(neg, 1), 1.0)
        for j, tag in enumerate(tags):
            if not active[j]:
                log.warning("tag %r (%s) excluded: %d positive / %d negative "
                            "training scripts", tag, attribute, int(pos[j]),
                            int(neg[j]))
        return cls(attribute=attribute, tags=tags, lam=lam, active=active)

    def __len__(self) -> int:
        return len(self.tags)

    def label_vector(self, tag_values: Sequence[str]) -> np.ndarray:
        present = set(tag_values)
        return np.array([1.0 if t in present else 0.0 for t in self.tags])

    def label_matrix(self, items: Sequence[CorpusItem]) -> np.ndarray:
        return np.stack([self.label_vector(it.tags.get(self.attribute, ()))
                         for it in items])

    def active_tags(self) -> tuple[str, ...]:
        return tuple(t for t, a in zip(self.tags, self.active) if a)

    def tag_set(self, binary: np.ndarray) -> set[str]:
        return {t for t, b, a in zip(self.tags, binary, self.active) if b and a}

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "tags": list(self.tags),
                "lam": [float(v) for v in self.lam],
                "active": [bool(v) for v in self.active]}

    @classmethod
    def from_dict(cls, d: dict) -> "TagTaxonomy":
        return cls(attribute=d["attribute"], tags=tuple(d["tags"]),
                   lam=np.asarray(d["lam"]), active=np.asarray(d["active"]))


def reweighted_loss(y: np.ndarray, z: Tensor, lam: np.ndarray,
                    active: np.ndarray | None = None,
                    form: str = STABLE) -> Tensor:
    """Reweighted multi-label loss over labels ``y`` and logits ``z``.

    ``y`` may be (L,) for a single script or (N, L) for a batch; ``z`` must
    match.  With every ``lam`` equal to 1 the stable form reduces exactly to
    mean binary cross-entropy.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != z.data.shape:
        raise ValueError(f"labels {y.shape} vs logits {z.data.shape}")
    lam = np.asarray(lam, dtype=np.float64)
    mask = np.ones_like(y) if active is None else \
        np.broadcast_to(np.asarray(active, dtype=np.float64), y.shape)
    denom = float(mask.sum())
    if denom == 0:
        raise DataEmpty("no active tags in the loss")
    c_pos = y * mask
    c_neg = (1.0 - y) * lam * mask
    pos = ad.mul(ad.constant(c_pos), ad.logsigmoid(z))
    if form == STABLE:
        neg = ad.mul(ad.constant(c_neg), ad.logsigmoid(ad.neg(z)))
        return ad.scale(ad.total(ad.add(pos, neg)), -1.0 / denom)
    if form == PRINTED:
        # literal form: + (1/NL) sum [ y log s(z) + lam (1-y) (1 - log s(z)) ]
        neg = ad.mul(ad.constant(c_neg), ad.logsigmoid(z))
        s = ad.add(ad.sub(ad.total(pos), ad.total(neg)),
                   ad.constant(c_neg.sum()))
        return ad.scale(s, 1.0 / denom)
    raise ValueError(f"unknown loss form {form!r}")


def predict_tags(logits: np.ndarray | Tensor, threshold: float = 0.5) -> np.ndarray:
    """Binary predictions: tag on iff sigmoid(z) > threshold (strict)."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    cut = math.log(threshold / (1.0 - threshold))
    return (z > cut).astype(np.int64)


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Micro-averaged AP over all pooled (script, tag) decisions."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    n_pos = y.sum()
    if n_pos == 0:
        raise NoPositives("no positive labels in the evaluation set")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    precision_at = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float((precision_at * hits).sum() / n_pos)


# ---------------------------------------------------------------------------
# models


class ClassifierHead:
    """Linear map from an encoder embedding to per-tag logits."""

    def __init__(self, n_tags: int, input_dim: int, rng: np.random.Generator):
        self.w = ad.parameter(ad.glorot(rng, (n_tags, input_dim)))
        self.b = ad.parameter(np.zeros(n_tags))

    def logits(self, vec: Tensor) -> Tensor:
        return ad.add(ad.matmul(self.w, vec), self.b)

    def named_params(self, prefix: str = "head") -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class ScriptTagModel:
    """Hierarchical script encoder plus a per-attribute classification head."""

    def __init__(self, encoder: HierarchicalModel, n_tags: int, seed: int = 0):
        self.encoder = encoder
        self.head = ClassifierHead(n_tags, encoder.script_dim,
                                   np.random.default_rng(seed + 1))

    def logits(self, screenplay: Screenplay) -> Tensor:
        return self.head.logits(self.encoder.encode_script(screenplay))

    def named_params(self) -> dict[str, Tensor]:
        out = self.encoder.named_params()
        out.update(self.head.named_params())
        return out


class LoglinesModel:
    """Bidirectional GRU over logline tokens feeding a linear classifier."""

    def __init__(self, vectors: TokenVectors, n_tags: int,
                 hidden_per_direction: int = 50, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.vectors = vectors
        self.gru = ad.init_bi_gru(rng, vectors.dim, hidden_per_direction)
        self.head = ClassifierHead(n_tags, 2 * hidden_per_direction,
                                   np.random.default_rng(seed + 1))

    @property
    def output_dim(self) -> int:
        return self.gru.output_dim

    def encode(self, tokens: list[str]) -> Tensor:
        if not tokens:
            raise MissingLogline("empty logline")
        _, final = ad.bi_gru(ad.constant(self.vectors.rows(tokens)), self.gru)
        return final

    def logits(self, tokens: list[str]) -> Tensor:
        return self.head.logits(self.encode(tokens))

    def named_params(self) -> dict[str, Tensor]:
        out = self.gru.named("logline.gru")
        out.update(self.head.named_params())
        return out


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-3
    max_norm: float = 5.0
    max_epochs: int = 20
    patience: int = 5
    threshold: float = 0.5
    seed: int = 0
    loss_form: str = STABLE
    stop_at_train_f1: float | None = None

    def to_dict(self) -> dict:
        return {"lr": self.lr, "max_norm": self.max_norm,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "threshold": self.threshold, "seed": self.seed,
                "loss_form": self.loss_form,
                "stop_at_train_f1": self.stop_at_train_f1}


@dataclass
class Sample:
    key: str
    x: object
    y: np.ndarray


@dataclass
class LogRow:
    epoch: int
    train_loss: float
    val_ap: float
    lr: float
    wallclock: float | None = None


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    best_epoch: int
    best_val_ap: float
    rows: list[LogRow] = field(default_factory=list)


def make_samples(items: Sequence[CorpusItem], taxonomy: TagTaxonomy,
                 use_loglines: bool = False) -> list[Sample]:
    samples: list[Sample] = []
    for it in items:
        y = taxonomy.label_vector(it.tags.get(taxonomy.attribute, ()))
        if use_loglines:
            if not it.logline:
                log.warning("skipping %s: %s", it.title,
                            MissingLogline(it.title))
                continue
            samples.append(Sample(it.title, tokenize(it.logline), y))
        else:
            samples.append(Sample(it.title, it.screenplay, y))
    return samples


def scores_for(model, samples: Sequence[Sample]) -> np.ndarray:
    """Sigmoid scores, one row per sample."""
    rows = []
    for s in samples:
        z = model.logits(s.x).data
        rows.append(1.0 / (1.0 + np.exp(-z)))
    return np.stack(rows)


def _micro_f1_binary(pred: np.ndarray, gold: np.ndarray) -> float:
    tp = float(np.sum((pred == 1) & (gold == 1)))
    fp = float(np.sum((pred == 1) & (gold == 0)))
    fn = float(np.sum((pred == 0) & (gold == 1)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def validation_ap(model, samples: Sequence[Sample], taxonomy: TagTaxonomy) -> float:
    if not samples:
        return 0.0
    scores = scores_for(model, samples)
    labels = np.stack([s.y for s in samples])
    keep = taxonomy.active.astype(bool)
    try:
        return average_precision(scores[:, keep], labels[:, keep])
    except NoPositives:
        return 0.0


def train(model, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          taxonomy: TagTaxonomy, config: TrainConfig = TrainConfig(),
          timing: bool = False) -> TrainResult:
    """Whole-script SGD: one optimizer step per screenplay.

    Keeps the parameters of the best validation-AP epoch and stops after
    ``patience`` epochs without improvement.  Fully deterministic for a
    fixed seed (the optional wallclock column is the one nondeterministic
    field and is off by default).
    """
    if not train_samples:
        raise DataEmpty("no training samples")
    if not val_samples:
        log.warning("no validation samples; early stopping uses training AP")
    params = model.named_params()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    rows: list[LogRow] = []
    best_ap = -1.0
    best_epoch = 0
    best_params = {k: t.data.copy() for k, t in params.items()}
    strikes = 0
    keep = taxonomy.active.astype(bool)
    start = time.monotonic()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        losses = []
        for i in order:
            sample = train_samples[int(i)]
            opt.zero_grad()
            z = model.logits(sample.x)
            loss = reweighted_loss(sample.y, z, taxonomy.lam, taxonomy.active,
                                   form=config.loss_form)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"epoch {epoch}, script {sample.key!r}: loss={value!r}")
            loss.backward()
            clip_grad_norm(params.values(), config.max_norm)
            opt.step()
            losses.append(value)
        val_ap = validation_ap(model, val_samples or train_samples, taxonomy)
        rows.append(LogRow(epoch=epoch, train_loss=float(np.mean(losses)),
                           val_ap=val_ap, lr=config.lr,
                           wallclock=time.monotonic() - start if timing else None))
        if val_ap > best_ap:
            best_ap = val_ap
            best_epoch = epoch
            best_params = {k: t.data.copy() for k, t in params.items()}
            strikes = 0
        else:
            strikes += 1
        if config.stop_at_train_f1 is not None:
            scores = scores_for(model, train_samples)
            preds = (scores > config.threshold).astype(np.int64)
            gold = np.stack([s.y for s in train_samples])
            f1 = _micro_f1_binary(preds[:, keep], gold[:, keep])
            if f1 >= config.stop_at_train_f1:
                break
        if strikes >= config.patience:
            break
    return TrainResult(best_params=best_params, best_epoch=best_epoch,
                       best_val_ap=best_ap, rows=rows)


def load_params(model, arrays: dict[str, np.ndarray]) -> None:
    params = model.named_params()
    missing = set(params) ^ set(arrays)
    if missing:
        raise ValueError(f"parameter names do not match: {sorted(missing)[:5]}")
    for name, tensor in params.items():
        tensor.data[...] = arrays[name]


def predictions(model, samples: Sequence[Sample], taxonomy: TagTaxonomy,
                threshold: float = 0.5) -> dict[str, set[str]]:
    """Thresholded tag-name predictions per script key."""
    out: dict[str, set[str]] = {}
    for s in samples:
        binary = predict_tags(model.logits(s.x), threshold)
        out[s.key] = taxonomy.tag_set(binary)
    return out
