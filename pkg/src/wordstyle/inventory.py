"""Fixed phoneme inventory shared by the corpus generator and the text encoders.

40 ARPABET-like symbols split into vowel and consonant classes. Every symbol
carries a base duration (frames) and a 20-channel cepstral template vector.
These constants are generated once from a fixed seed so that corpora and
models built on different machines agree exactly.
"""

import numpy as np

VOWELS = (
    "aa", "ae", "ah", "ao", "eh", "er",
    "ey", "ih", "iy", "ow", "uh", "uw",
)
CONSONANTS = (
    "b", "ch", "d", "dh", "dx", "f", "g", "hh", "jh", "k",
    "l", "m", "n", "ng", "p", "r", "s", "sh", "t", "th",
    "v", "w", "wh", "y", "z", "zh", "tx", "kx",
)
PHONEMES = VOWELS + CONSONANTS

assert len(PHONEMES) == 40
assert len(set(PHONEMES)) == 40

PHONEME_INDEX = {p: i for i, p in enumerate(PHONEMES)}

N_CEPSTRAL = 20

_rng = np.random.default_rng(20240601)
# Cepstral templates in [-1, 1]; vowels get longer base durations than
# consonants so rate scaling stays in a realistic frame range.
TEMPLATES = _rng.uniform(-1.0, 1.0, size=(len(PHONEMES), N_CEPSTRAL)).astype(np.float32)
BASE_DURATIONS = np.concatenate(
    [
        _rng.integers(7, 13, size=len(VOWELS)),
        _rng.integers(3, 9, size=len(CONSONANTS)),
    ]
).astype(np.int64)
del _rng

VOWEL_SET = frozenset(VOWELS)


def is_vowel(phoneme: str) -> bool:
    return phoneme in VOWEL_SET


def phoneme_to_index(phoneme: str) -> int:
    """Index of a symbol in the fixed inventory; raises on unknown symbols."""
    try:
        return PHONEME_INDEX[phoneme]
    except KeyError:
        raise ValueError(f"unknown phoneme symbol: {phoneme!r}") from None
