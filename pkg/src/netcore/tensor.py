"""Tensor conventions and the deterministic random stream.

Tensors are plain ``numpy`` arrays of dtype float64, row-major. Every random
draw in xmodal flows from an ``RngState``: a 64-bit seed feeding NumPy's PCG64
bit generator. Named child streams are derived through ``SeedSequence`` with
the CRC32 of the child name as spawn key, so adding a consumer never shifts the
stream seen by another one.
"""

import zlib
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import numpy.typing as npt

from ..errors import NonFiniteError

Tensor = npt.NDArray[np.float64]

_MAX_SEED = 2 ** 64


def as_tensor(values, name: str = "tensor") -> Tensor:
    """Convert to a C-contiguous float64 array and reject NaN/Inf."""
    array = np.ascontiguousarray(values, dtype=np.float64)
    check_finite(array, name)
    return array


def check_finite(array: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(array)):
        raise NonFiniteError("contains NaN or Inf", name=name)


@dataclass
class RngState:
    """Seeded PCG64 stream. Identical seed and call sequence give an identical stream."""

    seed: int
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < _MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.seed = int(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, name: str) -> "RngState":
        """Independent sub-stream keyed by name; does not advance this stream."""
        sequence = np.random.SeedSequence(entropy=self.seed,
                                          spawn_key=(zlib.crc32(name.encode("utf-8")),))
        derived = int(sequence.generate_state(1, dtype=np.uint64)[0])
        return RngState(derived)

    def integer_seed(self) -> int:
        """Draw a 31-bit seed for libraries that take an ``int`` random_state."""
        return int(self.generator.integers(0, 2 ** 31 - 1))


def init_gaussian(shape: Union[int, Sequence[int]], std: float, rng: RngState) -> Tensor:
    """I.i.d. zero-mean normal entries with the given standard deviation."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    return rng.generator.normal(0.0, std, size=shape).astype(np.float64)
