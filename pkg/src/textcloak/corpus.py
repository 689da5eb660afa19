"""Corpus ingestion: labeled text files -> tokenized documents, vocabulary, splits."""

from __future__ import annotations

import csv
import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field

MAX_DOC_LEN = 250
UNK_TOKEN = "<unk>"
UNK_ID = 0


@dataclass
class RawRecord:
    """One labeled text as it appears in the input file."""

    label: str
    text: str


@dataclass
class TokenizedDocument:
    """An ordered word sequence with its attribute label.

    ``perturbed_mask[i]`` is True once position i received a visual
    (character-level) edit; such positions are never edited again.
    """

    tokens: list[str]
    label_id: int
    origin_id: str
    perturbed_mask: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.perturbed_mask:
            self.perturbed_mask = [False] * len(self.tokens)
        if len(self.perturbed_mask) != len(self.tokens):
            raise ValueError("perturbed_mask length must equal token count")

    def __len__(self) -> int:
        return len(self.tokens)

    def copy(self) -> "TokenizedDocument":
        return TokenizedDocument(
            list(self.tokens), self.label_id, self.origin_id, list(self.perturbed_mask)
        )

    def replace(self, pos: int, surface: str, mark_visual: bool = False) -> "TokenizedDocument":
        """Return a copy with a single token substituted."""
        doc = self.copy()
        doc.tokens[pos] = surface
        if mark_visual:
            doc.perturbed_mask[pos] = True
        return doc

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class Vocabulary:
    """Dense token-id and label-id maps with frequency counts.

    Id 0 is reserved for the unknown token; remaining ids are assigned by
    descending frequency, ties broken lexicographically.
    """

    token_to_id: dict[str, int]
    id_to_token: list[str]
    counts: Counter
    label_to_id: dict[str, int]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def n_classes(self) -> int:
        return len(self.label_to_id)

    def vocab_hash(self) -> str:
        """Stable digest of the token and label maps, used to guard checkpoints."""
        h = hashlib.sha256()
        for tok in self.id_to_token:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        h.update(b"\x01")
        for name, lid in sorted(self.label_to_id.items()):
            h.update(f"{name}={lid}".encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass
class DatasetSplit:
    train: list[TokenizedDocument]
    test: list[TokenizedDocument]
    seed: int


def load_corpus(path: str, fmt: str = "tsv") -> tuple[list[RawRecord], int]:
    """Read ``label<TAB>text`` (tsv) or headered ``label,text`` (csv) rows.

    Returns the parsed records plus the number of rows skipped for having a
    missing or empty label/text. Unreadable files raise OSError.
    """
    if fmt not in ("tsv", "csv"):
        raise ValueError(f"unsupported corpus format: {fmt!r}")
    records: list[RawRecord] = []
    skipped = 0
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "tsv":
            for line in fh:
                line = line.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                parts = line.split("\t", 1)
                if len(parts) < 2 or not parts[0].strip() or not parts[1].strip():
                    skipped += 1
                    continue
                records.append(RawRecord(parts[0].strip(), parts[1].strip()))
        else:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and [c.strip().lower() for c in header[:2]] != ["label", "text"]:
                raise ValueError(f"csv corpus must start with a 'label,text' header: {path}")
            for row in reader:
                if not row:
                    continue
                if len(row) < 2 or not row[0].strip() or not row[1].strip():
                    skipped += 1
                    continue
                records.append(RawRecord(row[0].strip(), row[1].strip()))
    return records, skipped


def _strip_edges(piece: str) -> str:
    # Strip leading/trailing punctuation; interior characters (apostrophes,
    # digits, URLs' slashes) are kept as-is.
    start, end = 0, len(piece)
    while start < end and not piece[start].isalnum():
        start += 1
    while end > start and not piece[end - 1].isalnum():
        end -= 1
    return piece[start:end]


def tokenize(text: str, max_len: int = MAX_DOC_LEN) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, cap length."""
    tokens: list[str] = []
    for piece in text.lower().split():
        piece = _strip_edges(piece)
        if piece:
            tokens.append(piece)
            if len(tokens) >= max_len:
                break
    return tokens


def tokenize_corpus(
    records: list[RawRecord], max_len: int = MAX_DOC_LEN
) -> tuple[list[TokenizedDocument], list[str]]:
    """Tokenize records into documents; label ids follow sorted label names.

    Records whose text tokenizes to nothing are dropped.
    """
    label_names = sorted({r.label for r in records})
    label_to_id = {name: i for i, name in enumerate(label_names)}
    docs = []
    for i, rec in enumerate(records):
        tokens = tokenize(rec.text, max_len)
        if not tokens:
            continue
        docs.append(TokenizedDocument(tokens, label_to_id[rec.label], origin_id=f"r{i:06d}"))
    return docs, label_names


def build_vocab(
    docs: list[TokenizedDocument],
    min_count: int = 1,
    label_names: list[str] | None = None,
) -> Vocabulary:
    """Count tokens over docs and assign dense ids; id 0 is the unknown token."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not docs:
        raise ValueError("empty corpus")
    counts: Counter = Counter()
    for doc in docs:
        counts.update(doc.tokens)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    id_to_token = [UNK_TOKEN] + kept
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    if label_names is None:
        n_labels = max(doc.label_id for doc in docs) + 1
        label_names = [str(i) for i in range(n_labels)]
    label_to_id = {name: i for i, name in enumerate(label_names)}
    return Vocabulary(token_to_id, id_to_token, counts, label_to_id)


def split(docs: list[TokenizedDocument], train_ratio: float, seed: int) -> DatasetSplit:
    """Deterministic shuffled split; both sides end up non-empty."""
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must be in (0, 1)")
    if len(docs) < 2:
        raise ValueError("need at least 2 documents to split")
    order = list(range(len(docs)))
    random.Random(seed).shuffle(order)
    n_train = min(max(1, round(train_ratio * len(docs))), len(docs) - 1)
    train = [docs[i] for i in order[:n_train]]
    test = [docs[i] for i in order[n_train:]]
    return DatasetSplit(train, test, seed)
