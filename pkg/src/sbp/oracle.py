"""Exact finite-size reference computations for planted symmetric binary perceptrons.

Everything here works at small, explicit system size ``n``: instances are
sampled with a planted reference vector whose margins are drawn from the exact
truncated-normal law, solution sets are counted by exhaustive enumeration
(``n <= 24``), and the conditional first moment of shell counts is evaluated
in closed form.  These routines are deliberately independent of the
asymptotic formulas elsewhere in the package so the two can be checked
against each other.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .ensemble import ModelParams
from .numerics import log_half_erf_sum

__all__ = [
    "Instance",
    "LocalProfile",
    "MAX_ENUMERATION_BITS",
    "count_pairs_cmq",
    "empirical_local_entropy",
    "enumerate_solutions",
    "exact_conditional_first_moment",
    "load_instance",
    "plant_rows",
    "sample_planted_instance",
    "save_instance",
]

_LOGGER = logging.getLogger(__name__)

#: Largest ``n`` accepted by the exhaustive enumeration entry points.
MAX_ENUMERATION_BITS = 24

_CHUNK_BITS = 16
_CACHED_BLOCK_BITS = 18  # sign blocks are kept in memory up to this n


@dataclass(frozen=True)
class Instance:
    """One planted disorder realisation.

    ``g`` holds the ``m_rows x n`` Gaussian constraint rows, ``x0`` the
    planted reference vector.  Construction validates that ``x0`` satisfies
    every constraint at the reference margin: ``|<g_a, x0>| <= kappa0 *
    sqrt(n)`` for all rows, with no tolerance.
    """

    n: int
    m_rows: int
    g: np.ndarray
    x0: np.ndarray
    kappa: float
    kappa0: float
    seed: int

    def __post_init__(self) -> None:
        n = int(self.n)
        m_rows = int(self.m_rows)
        if n < 1:
            raise ValueError("n must be a positive integer")
        if m_rows < 0:
            raise ValueError("m_rows must be non-negative")
        g = np.array(self.g, dtype=float, order="C")
        x0 = np.array(self.x0, dtype=np.int64)
        if x0.shape != (n,):
            raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
        if not np.all(np.abs(x0) == 1):
            raise ValueError("x0 entries must be +1 or -1")
        if g.shape != (m_rows, n):
            raise ValueError(f"g must have shape ({m_rows}, {n}), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("g entries must be finite")
        kappa = float(self.kappa)
        kappa0 = float(self.kappa0)
        if not (math.isfinite(kappa) and kappa > 0.0):
            raise ValueError("kappa must be a positive finite real")
        if not (math.isfinite(kappa0) and 0.0 <= kappa0 <= kappa):
            raise ValueError("kappa0 must lie in [0, kappa]")
        margins = g @ x0.astype(float)
        if margins.size and np.max(np.abs(margins)) > kappa0 * math.sqrt(n):
            raise ValueError("x0 violates a constraint at margin kappa0")
        g.setflags(write=False)
        x0.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m_rows", m_rows)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "kappa0", kappa0)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def planted_margins(self) -> np.ndarray:
        """Normalised margins ``<g_a, x0> / sqrt(n)`` of the reference vector."""
        return (self.g @ self.x0.astype(float)) / math.sqrt(self.n)


@dataclass(frozen=True)
class LocalProfile:
    """Solution counts resolved by Hamming distance from the reference.

    ``counts[d]`` is the number of solutions at distance ``d`` from ``x0``,
    for ``d = 0 .. n``.
    """

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise ValueError("counts must be a 1-d array of length n + 1 >= 2")
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("counts must be integers")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return self.counts.size - 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def plant_rows(x0: np.ndarray, w: np.ndarray, gtilde: np.ndarray) -> np.ndarray:
    """Assemble constraint rows with prescribed reference margins.

    Each output row is ``w * x0 / sqrt(n)`` plus the component of the
    corresponding ``gtilde`` row orthogonal to ``x0`` (the projection is
    applied twice so the residual overlap is at the rounding level).  ``w``
    may have any leading shape as long as ``gtilde`` has shape
    ``w.shape + (n,)``.
    """
    x0f = np.asarray(x0, dtype=float)
    if x0f.ndim != 1:
        raise ValueError("x0 must be a vector")
    n = x0f.size
    w = np.asarray(w, dtype=float)
    gtilde = np.asarray(gtilde, dtype=float)
    if gtilde.shape != w.shape + (n,):
        raise ValueError("gtilde must have shape w.shape + (n,)")
    perp = gtilde - np.multiply.outer((gtilde @ x0f) / n, x0f)
    perp -= np.multiply.outer((perp @ x0f) / n, x0f)
    return np.multiply.outer(w / math.sqrt(n), x0f) + perp


def sample_planted_instance(
    n: int, m_rows: int, kappa0: float, kappa: float, seed: int
) -> Instance:
    """Draw one instance from the planted ensemble, bit-reproducibly.

    The generator is a counter-based Philox stream keyed by ``seed``; draws
    happen in the fixed order ``x0``, margin uniforms, Gaussian rows, so the
    same seed always yields the identical instance.  Margins are produced by
    the inverse CDF of the normal law truncated to ``[-kappa0, kappa0]``
    (no rejection), and rows are completed orthogonally to ``x0``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    x0 = rng.integers(0, 2, size=int(n)) * 2 - 1
    u = rng.random(int(m_rows))
    w = math.sqrt(2.0) * special.erfinv((2.0 * u - 1.0) * special.erf(kappa0 / math.sqrt(2.0)))
    gtilde = rng.standard_normal((int(m_rows), int(n)))
    g = plant_rows(x0, w, gtilde)
    return Instance(
        n=int(n), m_rows=int(m_rows), g=g, x0=x0, kappa=kappa, kappa0=kappa0, seed=int(seed)
    )


def _sign_block(n: int, start: int, count: int) -> np.ndarray:
    """Rows ``start .. start + count - 1`` of the 2^n x n sign matrix."""
    idx = np.arange(start, start + count, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return 2.0 * bits - 1.0


@functools.lru_cache(maxsize=1)
def _cached_sign_blocks(n: int) -> tuple[np.ndarray, ...]:
    blocks = []
    total = 1 << n
    chunk = 1 << _CHUNK_BITS
    for start in range(0, total, chunk):
        block = _sign_block(n, start, min(chunk, total - start))
        block.setflags(write=False)
        blocks.append(block)
    return tuple(blocks)


def _iter_sign_blocks(n: int):
    if n <= _CACHED_BLOCK_BITS:
        yield from _cached_sign_blocks(n)
        return
    total = 1 << n
    chunk = 1 << _CHUNK_BITS
    for start in range(0, total, chunk):
        yield _sign_block(n, start, min(chunk, total - start))


def enumerate_solutions(
    inst: Instance, kappa: float | None = None
) -> tuple[int, LocalProfile]:
    """Count all solutions at margin ``kappa`` by exhaustive enumeration.

    Returns the total count together with the profile of counts by Hamming
    distance from the planted reference.  The margin defaults to
    ``inst.kappa``; passing a different value counts solutions of the same
    disorder at another margin.  Only ``n <= 24`` is accepted.
    """
    if inst.n > MAX_ENUMERATION_BITS:
        raise ValueError(f"enumeration requires n <= {MAX_ENUMERATION_BITS}, got {inst.n}")
    kappa = inst.kappa if kappa is None else float(kappa)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise ValueError("kappa must be a non-negative finite real")
    n = inst.n
    threshold = kappa * math.sqrt(n)
    gt = np.ascontiguousarray(inst.g.T)
    x0f = inst.x0.astype(float)
    counts = np.zeros(n + 1, dtype=np.int64)
    for block in _iter_sign_blocks(n):
        feasible = np.all(np.abs(block @ gt) <= threshold, axis=1)
        if not feasible.any():
            continue
        overlaps = block[feasible] @ x0f
        distances = np.rint((n - overlaps) / 2.0).astype(np.int64)
        counts += np.bincount(distances, minlength=n + 1)
    profile = LocalProfile(counts)
    return profile.total, profile


def _shell_size(n: int, m_overlap: float, tol: float = 1e-9) -> int:
    """Number of +1 coordinates for overlap ``m`` at size ``n``, validated."""
    k_real = 0.5 * n * (1.0 + m_overlap)
    k = round(k_real)
    if abs(k_real - k) > tol:
        raise ValueError(
            f"overlap {m_overlap} does not give an integer coordinate count at n = {n}"
        )
    if not 0 <= k <= n:
        raise ValueError(f"overlap {m_overlap} lies outside [-1, 1] at n = {n}")
    return int(k)


def exact_conditional_first_moment(
    w: np.ndarray, n: int, m_overlap: float, kappa: float
) -> float:
    """Log of the expected solution count on one overlap shell, given margins.

    Conditionally on the reference margins ``w`` (one per constraint row),
    the expected number of margin-``kappa`` vectors at overlap ``m`` with the
    reference is ``binom(n, n(1+m)/2)`` times a product of per-row
    probabilities; this returns its exact logarithm.  ``m`` must correspond
    to an integer number of flipped coordinates.  An empty ``w`` is allowed
    (no constraints).  Returns ``-inf`` when the shell is unreachable.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("w must be a vector of reference margins")
    if not np.all(np.isfinite(w)):
        raise ValueError("w entries must be finite")
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    kappa = float(kappa)
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise ValueError("kappa must be a non-negative finite real")
    k = _shell_size(n, float(m_overlap))
    m = 2.0 * k / n - 1.0
    if abs(m) == 1.0:
        # The shell is the reference itself (or its antipode): the count is
        # the indicator that it satisfies every constraint.
        margins = w if m == 1.0 else -w
        return 0.0 if (margins.size == 0 or np.max(np.abs(margins)) <= kappa) else -math.inf
    log_binom = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    if w.size == 0:
        return log_binom
    if kappa == 0.0:
        return -math.inf
    sigma = math.sqrt(2.0 * (1.0 - m * m))
    terms = log_half_erf_sum((kappa + m * w) / sigma, (kappa - m * w) / sigma)
    return log_binom + float(np.sum(terms))


def _as_quarter_count(n: int, value: float, label: str, tol: float = 1e-9) -> int:
    count = round(value)
    if abs(value - count) > tol:
        raise ValueError(f"({label}) does not give an integer coordinate count at n = {n}")
    if count < 0:
        raise ValueError(f"({label}) requires a negative coordinate count at n = {n}")
    return int(count)


def count_pairs_cmq(n: int, m_overlap: float, q_overlap: float) -> int:
    """Exact number of ±1 pairs with prescribed overlaps to a reference.

    Counts pairs ``(x, y)`` such that ``<x, ref> = <y, ref> = m n`` and
    ``<x, y> = q n`` for any fixed reference vector; the answer is the exact
    multinomial over the four joint sign classes and is returned as a Python
    integer (no overflow).  Raises ``ValueError`` when ``(m, q)`` is not
    realisable at size ``n``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    m = float(m_overlap)
    q = float(q_overlap)
    k_pp = _as_quarter_count(n, 0.25 * n * (1.0 + 2.0 * m + q), "++ class")
    k_pm = _as_quarter_count(n, 0.25 * n * (1.0 - q), "+- class")
    k_mp = _as_quarter_count(n, 0.25 * n * (1.0 - q), "-+ class")
    k_mm = _as_quarter_count(n, 0.25 * n * (1.0 - 2.0 * m + q), "-- class")
    if k_pp + k_pm + k_mp + k_mm != n:
        raise ValueError(f"overlaps (m={m}, q={q}) are not realisable at n = {n}")
    return (
        math.comb(n, k_pp)
        * math.comb(n - k_pp, k_pm)
        * math.comb(n - k_pp - k_pm, k_mp)
    )


def empirical_local_entropy(
    params: ModelParams,
    n: int,
    samples: int,
    delta: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled local entropy by shell: mean and standard error over instances.

    Draws ``samples`` planted instances at size ``n`` with ``m_rows =
    round(alpha * n)`` constraint rows, enumerates each, and averages the
    per-shell quantity ``max(log counts[d], n * delta) / n`` over instances.
    The clamp floor ``delta`` (default 0) regularises empty shells, whose
    occurrences are reported through the module logger.  Returns arrays of
    length ``n + 1`` indexed by Hamming distance.
    """
    n = int(n)
    samples = int(samples)
    if samples < 1:
        raise ValueError("samples must be a positive integer")
    if n > MAX_ENUMERATION_BITS:
        raise ValueError(f"enumeration requires n <= {MAX_ENUMERATION_BITS}, got {n}")
    m_rows = int(round(params.alpha * n))
    child_seeds = np.random.SeedSequence(seed).generate_state(samples, np.uint64)
    values = np.empty((samples, n + 1))
    empty = np.zeros(n + 1, dtype=np.int64)
    floor = n * float(delta)
    for i in range(samples):
        inst = sample_planted_instance(
            n, m_rows, params.kappa0, params.kappa, seed=int(child_seeds[i])
        )
        _, profile = enumerate_solutions(inst)
        counts = profile.counts
        empty += counts == 0
        with np.errstate(divide="ignore"):
            log_counts = np.where(counts > 0, np.log(np.maximum(counts, 1)), -np.inf)
        values[i] = np.maximum(log_counts, floor) / n
    if empty.any():
        worst = int(np.argmax(empty))
        _LOGGER.info(
            "empirical_local_entropy: empty shells clamped to delta = %g "
            "(%d shell occurrences across %d samples; most often at distance %d)",
            delta,
            int(empty.sum()),
            samples,
            worst,
        )
    mean = values.mean(axis=0)
    if samples > 1:
        stderr = values.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        stderr = np.zeros(n + 1)
    return mean, stderr


def save_instance(inst: Instance, path) -> None:
    """Write an instance as self-describing text with bit-exact floats.

    Line 1 is ``n m kappa kappa0 seed`` (margins as C99 hex floats), line 2
    the reference vector, then one hex-float row of ``g`` per constraint.
    """
    lines = [
        f"{inst.n} {inst.m_rows} {float(inst.kappa).hex()} {float(inst.kappa0).hex()} {inst.seed}",
        " ".join(str(int(v)) for v in inst.x0),
    ]
    for row in inst.g:
        lines.append(" ".join(float(v).hex() for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_instance(path) -> Instance:
    """Read an instance written by :func:`save_instance`, bit-exactly."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated instance file")
    header = lines[0].split()
    if len(header) != 5:
        raise ValueError(f"{path}: header must be 'n m kappa kappa0 seed'")
    n, m_rows = int(header[0]), int(header[1])
    kappa, kappa0 = float.fromhex(header[2]), float.fromhex(header[3])
    seed = int(header[4])
    if len(lines) != 2 + m_rows:
        raise ValueError(f"{path}: expected {2 + m_rows} lines, found {len(lines)}")
    x0 = np.array([int(v) for v in lines[1].split()], dtype=np.int64)
    g = np.array(
        [[float.fromhex(v) for v in line.split()] for line in lines[2:]], dtype=float
    ).reshape(m_rows, n)
    return Instance(n=n, m_rows=m_rows, g=g, x0=x0, kappa=kappa, kappa0=kappa0, seed=seed)
