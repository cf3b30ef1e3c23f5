"""Synthetic planted-rule dataset.

Each sample is a grid of regions, every region carrying an (object,
attribute) pair rendered into four multi-scale feature maps; the question
names one object that occurs in exactly one region and the answer is that
region's attribute.

Attribute counts per sample are a shuffled near-balanced pattern capped at
floor(t / n_attributes) + 1. The cap bounds any region-blind predictor:
even with perfect knowledge of the attribute multiset, the best guess is
an attribute of maximal count, so its accuracy is at most
(floor(t/A) + 1) / t <= 2/A whenever A <= t. The mild imbalance leaves a
learnable per-sample prior that lets attention-based models bootstrap,
while the planted rule (attribute of the queried region) still requires
locating the region named by the question.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ConfigError, DataConfig, DcnConfig, N_LEVELS

ATTRIBUTE_GAIN = 1.5


@dataclass
class SyntheticSample:
    index: int
    split: int
    objects: np.ndarray        # (t,) object id per region
    attributes: np.ndarray     # (t,) attribute id per region
    query_pos: int
    tokens: list[int]
    answer: int
    pooled: list[np.ndarray]   # four (c_j, t) max-pooled feature maps
    pooled_tensors: list = field(default_factory=list)  # lazy constant-Tensor cache


@dataclass
class SyntheticDataset:
    """Samples plus the lookup tables that render them and the oracle answers."""

    t: int
    c: int
    n_objects: int
    n_attributes: int
    n_fillers: int
    noise_sigma: float
    seed: int
    split: int
    object_tables: list[np.ndarray]     # per level: (n_objects, c_j)
    attribute_tables: list[np.ndarray]  # per level: (n_attributes, c_j)
    samples: list[SyntheticSample] = field(default_factory=list)
    oracle: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def grid(self) -> int:
        return int(round(np.sqrt(self.t)))

    def level_channels(self, j: int) -> int:
        return self.c * (2 ** j)

    def level_side(self, j: int) -> int:
        return self.grid * (2 ** (N_LEVELS - 1 - j))

    def feature_maps(self, index: int) -> list[np.ndarray]:
        """Regenerate the raw (c_j, h_j, h_j) maps of one sample bit-exactly."""
        sample = self.samples[index]
        rng = _sample_rng(self.seed, self.split, sample.index)
        # redraw in generation order: layout fields first, then the noise
        _draw_layout(rng, self.t, self.n_objects, self.n_attributes,
                     self.n_fillers)
        maps = []
        for j in range(N_LEVELS):
            maps.append(self._render_level(sample, j, rng))
        return maps

    def _render_level(self, sample: SyntheticSample, j: int,
                      rng: np.random.Generator) -> np.ndarray:
        g = self.grid
        side = self.level_side(j)
        window = side // g
        base = (self.object_tables[j][sample.objects]
                + self.attribute_tables[j][sample.attributes])     # (t, c_j)
        base = base.T.reshape(self.level_channels(j), g, g)
        raw = np.kron(base, np.ones((1, window, window)))
        raw += rng.normal(0.0, self.noise_sigma, size=raw.shape)
        return raw

    def question_type(self, index: int) -> str:
        """Group label for statistics: which object the question asks about."""
        sample = self.samples[index]
        return f"object{sample.objects[sample.query_pos]}"


def object_token(object_id: int) -> int:
    return 1 + object_id


def attribute_token(attribute_id: int, n_objects: int, n_fillers: int) -> int:
    return 1 + n_objects + n_fillers + attribute_id


def _sample_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A, split, index]))


def _attribute_counts(rng: np.random.Generator, t: int, n_attributes: int) -> np.ndarray:
    """Per-attribute region counts: near-balanced, capped at floor(t/A) + 1."""
    base = t // n_attributes
    counts = np.full(n_attributes, base, dtype=np.int64)
    counts[:t - base * n_attributes] += 1
    # move one region between up to two attribute pairs, keeping the cap
    shifts = min(2, n_attributes // 2) if base >= 1 else 0
    for _ in range(shifts):
        gain, lose = rng.choice(n_attributes, size=2, replace=False)
        if counts[gain] < base + 1 and counts[lose] > max(base - 1, 1):
            counts[gain] += 1
            counts[lose] -= 1
    return rng.permutation(counts)


def _draw_layout(rng: np.random.Generator, t: int, n_objects: int,
                 n_attributes: int, n_fillers: int):
    """Region contents and question for one sample, from its private rng."""
    counts = _attribute_counts(rng, t, n_attributes)
    attrs = np.repeat(np.arange(n_attributes), counts)
    attrs = rng.permutation(attrs)

    query_object = int(rng.integers(n_objects))
    query_pos = int(rng.integers(t))
    others = np.delete(np.arange(n_objects), query_object)
    objects = rng.choice(others, size=t)
    objects[query_pos] = query_object

    if n_fillers > 0:
        length = int(rng.integers(2, 6))
        tokens = [1 + n_objects + int(f) for f in rng.integers(n_fillers, size=length)]
        tokens[int(rng.integers(length))] = object_token(query_object)
    else:
        tokens = [object_token(query_object)]
    return objects, attrs, query_pos, tokens


def gen_dataset(n: int, t: int, n_objects: int, n_attributes: int,
                n_fillers: int, c: int, noise_sigma: float, seed: int,
                split: int = 0) -> SyntheticDataset:
    """Build n reproducible samples; pattern tables depend on ``seed`` only,
    so splits generated with different ``split`` values share the rule."""
    if n_objects < 4 or n_attributes < 4:
        raise ConfigError(
            f"need at least 4 objects and 4 attributes to plant distractors, "
            f"got {n_objects} and {n_attributes}")
    g = int(round(np.sqrt(t)))
    if g * g != t:
        raise ConfigError(f"t must be a perfect square, got {t}")

    table_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7AB1E]))
    object_tables = [table_rng.standard_normal((n_objects, c * 2 ** j))
                     for j in range(N_LEVELS)]
    # attribute patterns carry the answer; render them above the object
    # patterns so attended features separate classes early in training
    attribute_tables = [ATTRIBUTE_GAIN * table_rng.standard_normal((n_attributes, c * 2 ** j))
                        for j in range(N_LEVELS)]

    ds = SyntheticDataset(
        t=t, c=c, n_objects=n_objects, n_attributes=n_attributes,
        n_fillers=n_fillers, noise_sigma=noise_sigma, seed=seed, split=split,
        object_tables=object_tables, attribute_tables=attribute_tables,
    )
    oracle = np.zeros(n, dtype=np.int64)
    for i in range(n):
        rng = _sample_rng(seed, split, i)
        objects, attrs, query_pos, tokens = _draw_layout(
            rng, t, n_objects, n_attributes, n_fillers)
        sample = SyntheticSample(
            index=i, split=split, objects=objects, attributes=attrs,
            query_pos=query_pos, tokens=tokens,
            answer=int(attrs[query_pos]), pooled=[],
        )
        for j in range(N_LEVELS):
            raw = ds._render_level(sample, j, rng)
            window = ds.level_side(j) // g
            cj = ds.level_channels(j)
            blocks = raw.reshape(cj, g, window, g, window)
            sample.pooled.append(
                np.ascontiguousarray(blocks.max(axis=(2, 4)).reshape(cj, t)))
        ds.samples.append(sample)
        oracle[i] = sample.answer
    ds.oracle = oracle
    return ds


def make_splits(model_cfg: DcnConfig, data_cfg: DataConfig,
                seed: int) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Train/test datasets sharing one planted rule."""
    common = dict(t=model_cfg.t, n_objects=model_cfg.n_objects,
                  n_attributes=model_cfg.n_attributes,
                  n_fillers=model_cfg.n_fillers, c=model_cfg.c,
                  noise_sigma=data_cfg.noise_sigma, seed=seed)
    train = gen_dataset(n=data_cfg.n_train, split=0, **common)
    test = gen_dataset(n=data_cfg.n_test, split=1, **common)
    return train, test


# ---------------------------------------------------------------------------
# region-blind reference model
# ---------------------------------------------------------------------------

def _baseline_features(ds: SyntheticDataset) -> np.ndarray:
    """Mean of the pooled features over regions, plus the question object."""
    rows = []
    for s in ds.samples:
        parts = [p.mean(axis=1) for p in s.pooled]
        onehot = np.zeros(ds.n_objects)
        onehot[s.objects[s.query_pos]] = 1.0
        rows.append(np.concatenate(parts + [onehot]))
    return np.stack(rows)


def mean_pool_baseline_accuracy(train_ds: SyntheticDataset,
                                test_ds: SyntheticDataset,
                                iters: int = 300, lr: float = 0.5) -> float:
    """Accuracy of softmax regression on region-averaged features.

    This is the attention-free reference: it sees the question object and
    the image only through a mean over regions, so on a well-formed dataset
    it cannot recover which region the question points at.
    """
    x_train = _baseline_features(train_ds)
    x_test = _baseline_features(test_ds)
    mu = x_train.mean(axis=0)
    sd = x_train.std(axis=0)
    sd[sd < 1e-9] = 1.0
    x_train = (x_train - mu) / sd
    x_test = (x_test - mu) / sd

    n_classes = train_ds.n_attributes
    y = train_ds.oracle
    onehot = np.eye(n_classes)[y]
    w = np.zeros((n_classes, x_train.shape[1]))
    b = np.zeros(n_classes)
    n = len(train_ds)
    for _ in range(iters):
        logits = x_train @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        delta = (p - onehot) / n
        w -= lr * (delta.T @ x_train + 1e-4 * w)
        b -= lr * delta.sum(axis=0)
    pred = (x_test @ w.T + b).argmax(axis=1)
    return float((pred == test_ds.oracle).mean())
