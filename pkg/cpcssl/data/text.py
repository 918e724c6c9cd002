"""Pre-segmented documents: tokenizer, vocabulary, and sentence sequences."""
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from cpcssl.core.config import logger
from cpcssl.core.exceptions import DataError
from cpcssl.data.samples import SequenceSample

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?|[^\sa-z0-9]")

Document = Tuple[List[str], Optional[int]]


def tokenize(sentence: str) -> List[str]:
    return _TOKEN_RE.findall(sentence.lower())


@dataclass
class Vocabulary:
    tokens: List[str]

    def __post_init__(self):
        self._ids: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, documents: Iterable[List[str]], size: int) -> "Vocabulary":
        """Most frequent ``size`` tokens (ties by first appearance) after the pad and unknown ids."""
        counts: Counter = Counter()
        for sentences in documents:
            for sentence in sentences:
                counts.update(tokenize(sentence))
        kept = [tok for tok, _ in counts.most_common(size)]
        if len(counts) > size:
            logger.warning(f"Vocabulary truncated from {len(counts)} to {size} tokens")
        return cls([PAD_TOKEN, UNK_TOKEN, *kept])

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, sentence: str, max_tokens: int) -> np.ndarray:
        ids = [self._ids.get(tok, UNK_ID) for tok in tokenize(sentence)][:max_tokens]
        return np.asarray(ids + [PAD_ID] * (max_tokens - len(ids)), dtype=np.int64)


def parse_text_line(line: str, labeled: bool) -> Document:
    fields = line.rstrip("\n").split("\t")
    label = None
    if labeled:
        try:
            label = int(fields[0])
        except ValueError:
            raise DataError(f"labeled text line must start with an integer label, got {fields[0]!r}")
        fields = fields[1:]
    return [s for s in fields if s.strip()], label


def read_text_documents(path: Union[str, Path], labeled: bool = True) -> List[Document]:
    with open(path, encoding="utf-8") as fh:
        documents = [parse_text_line(line, labeled) for line in fh if line.strip()]
    logger.info(f"Loaded {len(documents)} documents from {path}")
    return documents


def build_text_sequences(document: List[str], label: Optional[int], vocab: Vocabulary, length: int,
                         max_tokens: int, sample_id: int) -> SequenceSample:
    """One sentence per patch; documents shorter than ``length`` repeat their last sentence."""
    if not document:
        raise DataError(f"document {sample_id} is empty")
    sentences = list(document[:length])
    if len(sentences) < length:
        logger.debug(f"Document {sample_id} padded from {len(sentences)} to {length} sentences")
        sentences += [sentences[-1]] * (length - len(sentences))
    patches = np.stack([vocab.encode(s, max_tokens) for s in sentences])
    return SequenceSample(patches, label, sample_id)
