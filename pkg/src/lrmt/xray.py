"""Activation capture and the mass-activation algebra used for selective
neuron-knowledge pruning, knowledge abstraction, and change-in-mass analysis."""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .postag import pos_tag
from .text import encode


@dataclass
class SentenceActivations:
    tokens: list
    tags: list
    matrix: np.ndarray        # [len(tokens), N] float64

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError("token/tag count mismatch")
        if self.matrix.shape[0] != len(self.tokens):
            raise ValueError("activation row count mismatch")


@dataclass
class ActivationDataset:
    """Per-token encoder states for every real token of a test corpus."""

    width: int
    sentences: list
    provenance: dict = field(default_factory=dict)

    def total_tokens(self):
        return sum(len(s.tokens) for s in self.sentences)


@dataclass
class MassActivationMatrix:
    """Per-neuron aggregates over an entire activation dataset."""

    signed_mass: np.ndarray      # sum of raw activations
    magnitude_mass: np.ndarray   # sum of |activation|
    max_mass: np.ndarray         # sum of activations where the neuron was argmax
    hit_count: np.ndarray        # argmax occurrences

    @property
    def width(self):
        return self.signed_mass.shape[0]


@dataclass
class KnowledgeAbstraction:
    positive: float
    negative: float
    overall: float


@dataclass
class PosTokenDistribution:
    neuron: int
    entries: list                # (token, tag, mean activation, normalized mean)
    top_k: list                  # top-k entries by |normalized mean|
    pos_density: dict            # tag -> share of positively activated tokens


def capture_activations(model, corpus, provenance=None):
    """Record the encoder's per-token state for every real token (eval mode)."""
    sentences = []
    for src, _tgt in corpus.pairs:
        ids = encode(src, model.src_vocab)
        enc = model.encode(np.asarray(ids, dtype=np.int64).reshape(1, -1))
        mat = enc.activations(0).astype(np.float64)
        tokens = ["<sos>"] + list(src) + ["<eos>"]
        tags = ["X"] + pos_tag(src) + ["X"]
        sentences.append(SentenceActivations(tokens=tokens, tags=tags, matrix=mat))
    return ActivationDataset(width=model.analysis_width, sentences=sentences,
                             provenance=provenance or {})


def mass_matrices(acts):
    """One pass over the dataset filling all four per-neuron aggregates.

    Magnitude-argmax ties break toward the lowest neuron index.
    """
    if not acts.sentences:
        raise ValueError("empty activation dataset")
    N = acts.width
    signed = np.zeros(N, dtype=np.float64)
    magnitude = np.zeros(N, dtype=np.float64)
    max_mass = np.zeros(N, dtype=np.float64)
    hits = np.zeros(N, dtype=np.int64)
    for sent in acts.sentences:
        m = sent.matrix
        signed += m.sum(axis=0)
        magnitude += np.abs(m).sum(axis=0)
        arg = np.abs(m).argmax(axis=1)      # argmax takes the first (lowest) index on ties
        np.add.at(max_mass, arg, m[np.arange(m.shape[0]), arg])
        np.add.at(hits, arg, 1)
    return MassActivationMatrix(signed_mass=signed, magnitude_mass=magnitude,
                                max_mass=max_mass, hit_count=hits)


def dead_neurons(mass):
    """Neurons that were never the magnitude-argmax for any token."""
    return set(np.flatnonzero(mass.hit_count == 0).tolist())


def select_prune_set(mass, mode, percent=0.0):
    """Pick neurons to prune: dead, or the top/bottom floor(percent% of N)."""
    if mode == "dead":
        return dead_neurons(mass)
    if mode not in ("most_n", "least_n"):
        raise ValueError("unknown prune mode %r" % mode)
    if not 0.0 <= percent <= 100.0:
        raise ValueError("percent must be in [0, 100]")
    n = int(percent / 100.0 * mass.width)
    # stable sort on (key, index) so ties go to the lower neuron index
    order = np.lexsort((np.arange(mass.width),
                        -mass.magnitude_mass if mode == "most_n" else mass.magnitude_mass))
    return set(order[:n].tolist())


def prune_neuron_knowledge(model, neuron_ids):
    """Zero and pin the incoming weights/bias of the selected encoder units."""
    return model.prune_encoder_units(sorted(neuron_ids))


def knowledge_abstraction(mass):
    signed = mass.signed_mass
    positive = float(signed[signed > 0].sum())
    negative = float(signed[signed < 0].sum())
    return KnowledgeAbstraction(positive=positive, negative=negative,
                                overall=positive + negative)


def change_in_mass(before, after, top_k=5):
    """Elementwise signed-mass delta plus the most/least changed neuron ids."""
    if before.width != after.width:
        raise ValueError("mass matrix width mismatch")
    delta = after.signed_mass - before.signed_mass
    order = np.lexsort((np.arange(delta.shape[0]), -np.abs(delta)))
    most = order[:top_k].tolist()
    least = order[::-1][:top_k].tolist()
    return delta, most, least


def pos_token_distribution(acts, neuron, k=5):
    """Per-unique-token mean activation at one neuron, with POS annotations."""
    if not 0 <= neuron < acts.width:
        raise IndexError("neuron id out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    sums, counts, tag_votes, first_tag = {}, {}, {}, {}
    for sent in acts.sentences:
        for tok, tag, row in zip(sent.tokens, sent.tags, sent.matrix):
            val = float(row[neuron])
            sums[tok] = sums.get(tok, 0.0) + val
            counts[tok] = counts.get(tok, 0) + 1
            votes = tag_votes.setdefault(tok, {})
            votes[tag] = votes.get(tag, 0) + 1
            first_tag.setdefault(tok, tag)
    entries = []
    for tok in sums:
        mean = sums[tok] / counts[tok]
        votes = tag_votes[tok]
        best = max(votes.values())
        winners = [t for t, c in votes.items() if c == best]
        tag = first_tag[tok] if first_tag[tok] in winners else sorted(winners)[0]
        entries.append((tok, tag, mean))
    max_abs = max((abs(e[2]) for e in entries), default=0.0)
    scale = max_abs if max_abs > 0 else 1.0
    entries = [(tok, tag, mean, mean / scale) for tok, tag, mean in entries]
    entries.sort(key=lambda e: (-abs(e[3]), e[0]))
    top = entries[:k]
    positive = [e for e in entries if e[2] > 0]
    density = {}
    if positive:
        for _tok, tag, _mean, _norm in positive:
            density[tag] = density.get(tag, 0) + 1
        density = {tag: c / len(positive) for tag, c in sorted(density.items())}
    return PosTokenDistribution(neuron=neuron, entries=entries, top_k=top,
                                pos_density=density)


# -- exchange formats ----------------------------------------------------------


def dump_activations(acts, path):
    """Binary dump: header (width, sentence count), then per sentence the
    token list, tag list, and a row-major float64 activation block."""
    blob = bytearray()
    blob += struct.pack("<II", acts.width, len(acts.sentences))
    for sent in acts.sentences:
        blob += struct.pack("<I", len(sent.tokens))
        for seq in (sent.tokens, sent.tags):
            for item in seq:
                raw = item.encode("utf-8")
                blob += struct.pack("<H", len(raw))
                blob += raw
        blob += sent.matrix.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_activations(path):
    raw = Path(path).read_bytes()
    width, count = struct.unpack_from("<II", raw, 0)
    offset = 8
    sentences = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        seqs = []
        for _s in range(2):
            items = []
            for _i in range(length):
                (n,) = struct.unpack_from("<H", raw, offset)
                offset += 2
                items.append(raw[offset:offset + n].decode("utf-8"))
                offset += n
            seqs.append(items)
        nbytes = length * width * 8
        mat = np.frombuffer(raw[offset:offset + nbytes], dtype="<f8")
        mat = mat.reshape(length, width).copy()
        offset += nbytes
        sentences.append(SentenceActivations(tokens=seqs[0], tags=seqs[1], matrix=mat))
    return ActivationDataset(width=width, sentences=sentences)


def activations_to_json(acts, path):
    doc = {"width": acts.width, "provenance": acts.provenance,
           "sentences": [{"tokens": s.tokens, "tags": s.tags,
                          "activations": s.matrix.tolist()} for s in acts.sentences]}
    Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


def analysis_export(stage, mass, knowledge=None, top_changed=None):
    """The machine-readable analysis record written by the report layer."""
    knowledge = knowledge or knowledge_abstraction(mass)
    return {
        "stage": stage,
        "width": mass.width,
        "signed_mass": mass.signed_mass.tolist(),
        "magnitude_mass": mass.magnitude_mass.tolist(),
        "max_mass": mass.max_mass.tolist(),
        "hit_count": mass.hit_count.tolist(),
        "knowledge": {"positive": knowledge.positive,
                      "negative": knowledge.negative,
                      "overall": knowledge.overall},
        "top_changed": top_changed or [],
    }
