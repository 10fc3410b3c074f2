"""Instruction-to-vector encoders, all producing the same dimension D.

* one-hot: an independent learned row per distinct instruction string,
  allocated lazily while training.
* recurrent: learned word embeddings fed through a GRU cell; the last
  hidden state is the instruction embedding.
* pretrained: frozen word vectors, mean-pooled, through one learned
  projection. Only the projection trains.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .goals import GoalSpace, UnknownInstruction, tokenize

ONE_HOT = "one_hot"
RECURRENT = "recurrent"
PRETRAINED = "pretrained"
ENCODER_KINDS = (ONE_HOT, RECURRENT, PRETRAINED)


class UnknownWord(KeyError):
    """Word missing from the frozen pretrained table."""


class MalformedEmbeddingFile(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class OneHotEncoder:
    kind = ONE_HOT
    supports_unseen = False

    def __init__(self, dim):
        self.dim = dim
        self.registry = {}  # instruction text -> parameter name

    def init_params(self, store, rng):
        pass  # rows appear lazily

    def encode(self, store, text, train=False):
        name = self.registry.get(text)
        if name is None:
            if not train:
                raise UnknownInstruction(text)
            name = f"enc_row{len(self.registry)}"
            store.add(name, np.zeros(self.dim))
            self.registry[text] = name
        if name not in store:
            # a target-net copy that predates this row sees its initial value
            return nn.Tensor(np.zeros(self.dim))
        return store[name]

    def registry_meta(self):
        return dict(self.registry)

    def load_registry(self, meta):
        self.registry = dict(meta)


class RecurrentEncoder:
    kind = RECURRENT
    supports_unseen = True

    def __init__(self, vocab, dim, word_dim=None):
        self.vocab = vocab
        self.dim = dim
        self.word_dim = word_dim or max(dim // 2, 1)

    def init_params(self, store, rng):
        wd, d = self.word_dim, self.dim
        store.add("enc_emb", rng.normal(0.0, 0.1, size=(len(self.vocab), wd)))
        for gate in ("r", "z", "c"):
            store.add(f"enc_gru_W{gate}", glorot(rng, wd, d))
            store.add(f"enc_gru_U{gate}", glorot(rng, d, d))
            store.add(f"enc_gru_b{gate}", np.zeros(d))

    def encode(self, store, text, train=False):
        tokens = tokenize(text, self.vocab)
        h = nn.Tensor(np.zeros((1, self.dim)))
        for tid in tokens:
            x = nn.index_rows(store["enc_emb"], [tid])
            h = nn.gru_cell(x, h, store, prefix="enc_gru")
        return nn.reshape(h, (self.dim,))


class PretrainedEncoder:
    kind = PRETRAINED
    supports_unseen = True

    def __init__(self, table, dim):
        if not table:
            raise MalformedEmbeddingFile("empty word-vector table")
        self.table = table
        self.table_dim = len(next(iter(table.values())))
        self.dim = dim

    def init_params(self, store, rng):
        store.add("enc_proj", glorot(rng, self.table_dim, self.dim))

    def pool(self, text):
        words = text.split()
        vecs = []
        for w in words:
            if w not in self.table:
                raise UnknownWord(w)
            vecs.append(self.table[w])
        if not vecs:
            return np.zeros(self.table_dim)
        return np.mean(vecs, axis=0)

    def encode(self, store, text, train=False):
        pooled = self.pool(text)
        out = nn.matmul(nn.Tensor(pooled[None, :]), store["enc_proj"])
        return nn.reshape(out, (self.dim,))


def make_encoder(kind, dim, vocab=None, word_dim=None, table=None):
    if kind == ONE_HOT:
        return OneHotEncoder(dim)
    if kind == RECURRENT:
        if vocab is None:
            raise ValueError("recurrent encoder needs a vocabulary")
        return RecurrentEncoder(vocab, dim, word_dim)
    if kind == PRETRAINED:
        if table is None:
            raise ValueError("pretrained encoder needs a word-vector table")
        return PretrainedEncoder(table, dim)
    raise ValueError(f"unknown encoder kind: {kind!r}")


def load_pretrained_table(path):
    """Load ``word v1 v2 ... vD`` lines into a frozen word-vector table."""
    table = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if not values:
                raise MalformedEmbeddingFile(f"{path}:{lineno}: no values for {word!r}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as err:
                raise MalformedEmbeddingFile(f"{path}:{lineno}: {err}") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DimensionMismatch(
                    f"{path}:{lineno}: row has {vec.size} values, expected {dim}"
                )
            table[word] = vec
    if not table:
        raise MalformedEmbeddingFile(f"{path}: empty table")
    return table


def make_synthetic_pretrained(
    goal_space: GoalSpace, synonym_table, noise_sigma, rng, dim=32, path=None
):
    """Build a word-vector table with controlled synonym geometry.

    Base words get independent random unit vectors; each synonym gets its
    original's vector plus isotropic Gaussian noise of scale ``noise_sigma``.
    Optionally written to ``path`` in the text format above.
    """
    table = {}
    for word in goal_space.vocab:
        v = rng.normal(size=dim)
        table[word] = v / np.linalg.norm(v)
    for original, synonyms in synonym_table.items():
        if original not in table:
            continue
        for syn in synonyms:
            table[syn] = table[original] + noise_sigma * rng.normal(size=dim)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, vec in table.items():
                fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")
    return table
