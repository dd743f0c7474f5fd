"""Sand pile configurations and the single-column firing rule.

A configuration is a sequence of non-negative height differences
sigma_0, sigma_1, ... with an implicit all-zero tail.  Column i may fire
when sigma_i >= D; firing sends D-1 grains to the left neighbour slope
and one grain D-1 columns to the right:

    sigma_{i-1} += D-1   (skipped for i = 0)
    sigma_i     -= D
    sigma_{i+D-1} += 1

The weighted mass sum((i+1) * sigma_i) counts grains and is invariant
under firing.
"""

from __future__ import annotations

from dataclasses import dataclass


class NotFireableError(ValueError):
    """Raised when a firing is requested on a column with sigma_i < D."""


@dataclass(frozen=True)
class Parameters:
    """Model parameter: the firing threshold D (D >= 2)."""

    d: int

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d!r}")


def _trim(sigma: tuple[int, ...]) -> tuple[int, ...]:
    n = len(sigma)
    while n > 0 and sigma[n - 1] == 0:
        n -= 1
    return sigma[:n]


@dataclass(frozen=True)
class Configuration:
    """Immutable ultimately-null sequence of non-negative slope values.

    Trailing zeros are allowed in the stored tuple and do not affect
    equality or hashing; indexing past the stored length reads 0.
    """

    sigma: tuple[int, ...]
    params: Parameters

    def __post_init__(self):
        if not isinstance(self.sigma, tuple):
            object.__setattr__(self, "sigma", tuple(self.sigma))
        for i, v in enumerate(self.sigma):
            if v < 0:
                raise ValueError(f"negative slope {v} at column {i}")

    @classmethod
    def empty(cls, params: Parameters) -> "Configuration":
        return cls((), params)

    def __getitem__(self, i: int) -> int:
        if i < 0:
            raise IndexError("column indices start at 0")
        return self.sigma[i] if i < len(self.sigma) else 0

    def __len__(self) -> int:
        return len(self.sigma)

    def trimmed(self) -> tuple[int, ...]:
        return _trim(self.sigma)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.params == other.params and self.trimmed() == other.trimmed()

    def __hash__(self) -> int:
        return hash((self.params, self.trimmed()))


def is_fireable(cfg: Configuration, i: int) -> bool:
    return cfg[i] >= cfg.params.d


def is_stable(cfg: Configuration) -> bool:
    d = cfg.params.d
    return all(v < d for v in cfg.sigma)


def fire(cfg: Configuration, i: int) -> Configuration:
    """Fire column i, returning the successor configuration.

    Raises NotFireableError when sigma_i < D; silent misfires would break
    every conservation argument downstream, so this is a hard error.
    """
    d = cfg.params.d
    if cfg[i] < d:
        raise NotFireableError(f"column {i} holds {cfg[i]} < {d}")
    top = i + d - 1
    sigma = list(cfg.sigma)
    if top >= len(sigma):
        sigma.extend([0] * (top - len(sigma) + 1))
    sigma[i] -= d
    sigma[top] += 1
    if i > 0:
        sigma[i - 1] += d - 1
    return Configuration(tuple(sigma), cfg.params)


def add_grain(cfg: Configuration, i: int = 0) -> Configuration:
    """Drop one grain on column i (the iterative process uses i = 0)."""
    if i < 0:
        raise IndexError("column indices start at 0")
    sigma = list(cfg.sigma)
    if i >= len(sigma):
        sigma.extend([0] * (i - len(sigma) + 1))
    sigma[i] += 1
    return Configuration(tuple(sigma), cfg.params)


def heights(cfg: Configuration, n: int) -> tuple[int, ...]:
    """First n column heights h_i = sum of sigma_j for j >= i."""
    if n < 0:
        raise ValueError("n must be >= 0")
    total = sum(cfg.sigma)
    out = []
    for i in range(n):
        out.append(total)
        total -= cfg[i]
    return tuple(out)


def weighted_mass(cfg: Configuration) -> int:
    """Number of grains: sum((i+1) * sigma_i).  Invariant under fire()."""
    return sum((i + 1) * v for i, v in enumerate(cfg.sigma))
