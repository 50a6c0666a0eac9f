"""Reproducible, independent random streams keyed by (seed, stream_id).

Philox is counter-based, so distinct keys give statistically independent
streams and identical keys reproduce identical sequences bit-exactly.
"""

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = (int(self.seed) & _MASK64) | ((int(self.stream_id) & _MASK64) << 64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)
