"""Stencils, tabulated submodular potentials and their coarea (Lovász) extension.

A potential ``F`` is stored as a flat table of ``2**len(stencil)`` values; bit
``i`` of the table index is the value at ``stencil.offsets[i]``.  The extension
of ``F`` to real vectors is

    F(u) = integral over s of F(chi_{u > s}) ds,

evaluated exactly by sorting the entries of ``u``.

Coercivity is certified on binary vectors only.  Both ``F`` and
``u -> sum_i |u(e_i) - u(0)|`` satisfy the same coarea formula and are positively
homogeneous, so ``F(u) >= c * sum_i |u(e_i) - u(0)|`` holds for every real ``u``
as soon as it holds for every binary ``u`` (integrate the binary inequality over
the level sets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, DomainError, PreconditionError

MAX_STENCIL_SIZE = 20
_EXHAUSTIVE_PAIR_LIMIT = 12


def bits_to_mask(bits: Sequence[int]) -> int:
    """Pack a binary vector (offset order) into a table index."""
    return sum(int(b) << i for i, b in enumerate(bits))


def mask_to_bits(mask: int, size: int) -> tuple:
    return tuple((mask >> i) & 1 for i in range(size))


@dataclass(frozen=True)
class Stencil:
    """Finite set of integer offsets; the first offset must be the origin."""

    offsets: tuple

    def __post_init__(self):
        offs = tuple(tuple(int(c) for c in o) for o in self.offsets)
        if not offs:
            raise ConfigurationError("stencil must contain at least the origin")
        dims = {len(o) for o in offs}
        if len(dims) != 1 or 0 in dims:
            raise ConfigurationError("all offsets must have the same positive dimension")
        if len(set(offs)) != len(offs):
            raise ConfigurationError("stencil offsets must be pairwise distinct")
        if len(offs) > MAX_STENCIL_SIZE:
            raise ConfigurationError(
                f"stencil has {len(offs)} offsets; tables are limited to {MAX_STENCIL_SIZE}"
            )
        if (0,) * len(offs[0]) not in offs:
            raise ConfigurationError("stencil must contain the origin")
        object.__setattr__(self, "offsets", offs)

    @property
    def dim(self) -> int:
        return len(self.offsets[0])

    @property
    def size(self) -> int:
        return len(self.offsets)

    def __len__(self):
        return len(self.offsets)

    @property
    def origin_index(self) -> int:
        return self.offsets.index((0,) * self.dim)

    @cached_property
    def basis_indices(self) -> Optional[tuple]:
        """Indices of e_1..e_N within ``offsets``, or None if some e_i is missing."""
        idx = []
        for i in range(self.dim):
            e = tuple(1 if j == i else 0 for j in range(self.dim))
            if e not in self.offsets:
                return None
            idx.append(self.offsets.index(e))
        return tuple(idx)

    @cached_property
    def radius(self) -> float:
        return max(math.sqrt(sum(c * c for c in o)) for o in self.offsets)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.offsets, dtype=np.int64)
        a.setflags(write=False)
        return a

    @classmethod
    def nearest_neighbor(cls, dim: int = 2) -> "Stencil":
        offs = [(0,) * dim]
        offs += [tuple(1 if j == i else 0 for j in range(dim)) for i in range(dim)]
        return cls(tuple(offs))


@dataclass(frozen=True, eq=False)
class StencilPotential:
    """Nonnegative table ``F: {0,1}^stencil -> [0, inf)`` with ``F(0) = F(1) = 0``.

    Submodularity is not enforced at construction; use :func:`check_submodular`.
    """

    stencil: Stencil
    values: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        n = self.stencil.size
        if vals.size != 1 << n:
            raise ConfigurationError(
                f"potential table has {vals.size} entries, expected 2**{n} = {1 << n}"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("potential values must be finite")
        if np.any(vals < 0):
            raise ConfigurationError("potential values must be nonnegative")
        if vals[0] != 0.0 or vals[-1] != 0.0:
            raise ConfigurationError("potential must vanish on the all-zeros and all-ones vectors")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return self.stencil.size

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def slack(self) -> float:
        return 1e-12 * max(1.0, self.max_value)

    @cached_property
    def coercivity_c(self) -> float:
        if self.stencil.basis_indices is None:
            return 0.0
        return check_coercivity(self)

    def __call__(self, u):
        return lovasz_extend(self, u)

    def is_complement_symmetric(self) -> bool:
        full = (1 << self.size) - 1
        masks = np.arange(1 << self.size)
        return bool(np.array_equal(self.values, self.values[full ^ masks]))

    @classmethod
    def from_function(cls, stencil: Stencil, func, name: str = "") -> "StencilPotential":
        """Tabulate ``func(bits)`` over every binary vector."""
        n = stencil.size
        table = [float(func(mask_to_bits(m, n))) for m in range(1 << n)]
        return cls(stencil, np.array(table), name=name)


# ---------------------------------------------------------------------------
# built-in potentials

def nearest_neighbor_potential(dim: int = 2) -> StencilPotential:
    """``F(u) = sum_i |u(e_i) - u(0)|`` on the stencil ``{0, e_1, ..., e_N}``."""
    st = Stencil.nearest_neighbor(dim)
    basis = st.basis_indices
    o = st.origin_index
    return StencilPotential.from_function(
        st, lambda b: sum(abs(b[i] - b[o]) for i in basis), name="nearest_neighbor"
    )


def binary_euclidean_potential() -> StencilPotential:
    """Binary restriction of ``sqrt((u(e1)-u(0))**2 + (u(e2)-u(0))**2)`` in 2D.

    Values: 1 on a single flipped neighbour, sqrt(2) when both neighbours differ
    from the origin.  Complement symmetric.  Its extension is crystalline, not
    Euclidean.
    """
    st = Stencil.nearest_neighbor(2)
    return StencilPotential.from_function(
        st,
        lambda b: math.sqrt((b[1] - b[0]) ** 2 + (b[2] - b[0]) ** 2),
        name="binary_euclidean",
    )


def diagonal_pairs_potential() -> StencilPotential:
    """Pair interactions on ``{0, e1, e2, e1+e2}``, diagonals weighted by 1/sqrt(2)."""
    st = Stencil(((0, 0), (1, 0), (0, 1), (1, 1)))
    w = 1.0 / math.sqrt(2.0)

    def f(b):
        return abs(b[1] - b[0]) + abs(b[2] - b[0]) + w * (abs(b[3] - b[0]) + abs(b[2] - b[1]))

    return StencilPotential.from_function(st, f, name="diagonal_pairs")


def zero_potential(stencil: Optional[Stencil] = None) -> StencilPotential:
    st = stencil or Stencil.nearest_neighbor(2)
    return StencilPotential(st, np.zeros(1 << st.size), name="zero")


BUILTIN_POTENTIALS = {
    "nearest_neighbor": nearest_neighbor_potential,
    "binary_euclidean": binary_euclidean_potential,
    "diagonal_pairs": diagonal_pairs_potential,
}


# ---------------------------------------------------------------------------
# hypotheses on F

@dataclass
class SubmodularityReport:
    ok: bool
    witness: Optional[tuple] = None  # (u_bits, v_bits)
    worst_violation: float = 0.0

    def __bool__(self):
        return self.ok


def check_submodular(F: StencilPotential) -> SubmodularityReport:
    """Verify ``F(u & v) + F(u | v) <= F(u) + F(v)`` over binary vectors.

    Exhaustive over all pairs for stencils of at most 12 offsets; larger
    stencils use the equivalent second-difference criterion
    ``F(S+i) + F(S+j) >= F(S) + F(S+i+j)``.
    """
    n = F.size
    T = F.values
    tau = F.slack
    masks = np.arange(1 << n, dtype=np.int64)
    worst, witness = 0.0, None
    if n <= _EXHAUSTIVE_PAIR_LIMIT:
        for u in range(1 << n):
            v = masks[u + 1:]
            # comparable pairs hold with equality
            gap = T[u & v] + T[u | v] - T[u] - T[v]
            k = int(np.argmax(gap)) if gap.size else 0
            if gap.size and gap[k] > worst:
                worst = float(gap[k])
                witness = (u, int(v[k]))
    else:
        for i in range(n):
            for j in range(i + 1, n):
                bi, bj = 1 << i, 1 << j
                S = masks[(masks & (bi | bj)) == 0]
                gap = T[S] + T[S | bi | bj] - T[S | bi] - T[S | bj]
                k = int(np.argmax(gap))
                if gap[k] > worst:
                    worst = float(gap[k])
                    witness = (int(S[k] | bi), int(S[k] | bj))
    if worst > tau:
        u, v = witness
        return SubmodularityReport(False, (mask_to_bits(u, n), mask_to_bits(v, n)), worst)
    return SubmodularityReport(True, None, worst)


def _neighbor_jumps(stencil: Stencil, masks: np.ndarray) -> np.ndarray:
    """``sum_i |w(e_i) - w(0)|`` for every binary vector in ``masks``."""
    o = stencil.origin_index
    origin_bit = (masks >> o) & 1
    return sum(np.abs(((masks >> i) & 1) - origin_bit) for i in stencil.basis_indices)


def check_coercivity(F: StencilPotential) -> float:
    """Largest ``c >= 0`` with ``F(u) >= c * sum_i |u(e_i) - u(0)|`` for all ``u``."""
    if F.stencil.basis_indices is None:
        raise PreconditionError("coercivity requires the stencil to contain every basis vector")
    masks = np.arange(1 << F.size, dtype=np.int64)
    d = _neighbor_jumps(F.stencil, masks)
    sel = d > 0
    return float(np.min(F.values[sel] / d[sel]))


def upper_pair_constant(F: StencilPotential) -> float:
    """``max F(w) / #{y : w(y) != w(0)}`` over binary ``w`` with ``F(w) > 0``.

    Gives ``F(u) <= C * sum_y |u(y) - u(0)|`` for every real ``u``.
    """
    n = F.size
    o = F.stencil.origin_index
    masks = np.arange(1 << n, dtype=np.int64)
    origin_bit = (masks >> o) & 1
    differing = sum(((masks >> i) & 1) != origin_bit for i in range(n)).astype(float)
    sel = F.values > 0
    if not np.any(sel):
        return 0.0
    return float(np.max(F.values[sel] / differing[sel]))


# ---------------------------------------------------------------------------
# coarea extension

def lovasz_extend_rows(table: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Extension of a potential table applied to each row of ``U``.

    Rows are sorted in decreasing order; on the interval between the j-th and
    (j+1)-th largest values the strict level set is the set of the j largest
    entries.  Tied entries give zero-width intervals and contribute nothing.
    """
    U = np.asarray(U, dtype=float)
    if U.shape[1] < 2:
        return np.zeros(U.shape[0])
    order = np.argsort(-U, axis=1, kind="stable")
    S = np.take_along_axis(U, order, axis=1)
    top = np.cumsum(np.left_shift(1, order), axis=1)[:, :-1]
    gaps = S[:, :-1] - S[:, 1:]
    return (gaps * table[top]).sum(axis=1)


def lovasz_extend(F: StencilPotential, u) -> float:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != F.size:
        raise PreconditionError(f"vector has {u.size} entries, stencil has {F.size}")
    if not np.all(np.isfinite(u)):
        raise DomainError("extension is only defined for finite vectors")
    return float(lovasz_extend_rows(F.values, u[None, :])[0])


def greedy_subgradient(F: StencilPotential, u) -> np.ndarray:
    """Subgradient of the extension at ``u`` from the decreasing sort order."""
    u = np.asarray(u, dtype=float).reshape(-1)
    order = np.argsort(-u, kind="stable")
    top = np.concatenate([[0], np.cumsum(np.left_shift(1, order))])
    w = np.empty(F.size)
    w[order] = F.values[top[1:]] - F.values[top[:-1]]
    return w


def base_vertices(F: StencilPotential, max_size: int = 8) -> np.ndarray:
    """Distinct greedy vertices, one per ordering of the stencil offsets.

    For submodular ``F`` with ``F(0) = F(1) = 0`` the extension equals
    ``max_v <w_v, u>`` over these vertices.
    """
    import itertools

    n = F.size
    if n > max_size:
        raise PreconditionError(f"vertex enumeration limited to {max_size} offsets, got {n}")
    verts = set()
    for perm in itertools.permutations(range(n)):
        w = [0.0] * n
        mask = 0
        prev = 0.0
        for i in perm:
            mask |= 1 << i
            cur = float(F.values[mask])
            w[i] = cur - prev
            prev = cur
        verts.add(tuple(w))
    return np.array(sorted(verts))


# ---------------------------------------------------------------------------
# randomized verification of the extension

@dataclass
class PropertyReport:
    samples: int
    passed: dict
    witnesses: dict

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def lines(self):
        for k, v in self.passed.items():
            yield f"{k}: {'pass' if v else 'FAIL'}"


def _close(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def _le(a, b, rtol):
    return a <= b + rtol * max(abs(a), abs(b))


def extension_properties_check(
    F: StencilPotential, samples: int = 1000, rng_seed: int = 0, rtol: float = 1e-9
) -> PropertyReport:
    """Random tests of homogeneity, shift invariance, the lattice inequality and convexity."""
    rng = np.random.default_rng(rng_seed)
    n = F.size
    names = ("homogeneity", "shift_invariance", "lattice_inequality", "convexity")
    passed = {k: True for k in names}
    witnesses = {}

    def fail(key, *vecs):
        if passed[key]:
            passed[key] = False
            witnesses[key] = tuple(np.array(v) for v in vecs)

    L = lambda x: lovasz_extend(F, x)  # noqa: E731
    for _ in range(samples):
        u = rng.normal(size=n)
        v = rng.normal(size=n)
        # some samples with ties and small integers, where lattice failures are easy to hit
        if rng.random() < 0.3:
            u = rng.integers(0, 3, size=n).astype(float)
            v = rng.integers(0, 3, size=n).astype(float)
        lam = float(np.exp(rng.uniform(-3, 3)))
        c = float(rng.normal(scale=5.0))
        t = float(rng.uniform())
        Lu, Lv = L(u), L(v)
        if not _close(L(lam * u), lam * Lu, rtol):
            fail("homogeneity", u, [lam])
        if not _close(L(u + c), Lu, rtol):
            fail("shift_invariance", u, [c])
        if not _le(L(np.minimum(u, v)) + L(np.maximum(u, v)), Lu + Lv, rtol):
            fail("lattice_inequality", u, v)
        if not _le(L(t * u + (1 - t) * v), t * Lu + (1 - t) * Lv, rtol):
            fail("convexity", u, v, [t])
    return PropertyReport(samples, passed, witnesses)


# ---------------------------------------------------------------------------
# text format

def _parse_mask(token: str, n: int) -> int:
    tok = token.strip()
    if tok.startswith(("0b", "0B")):
        return int(tok[2:], 2)
    if len(tok) == n and set(tok) <= {"0", "1"}:
        return int(tok, 2)
    return int(tok, 10)


def parse_potential(text: str, name: str = "") -> StencilPotential:
    """Parse the line-oriented potential format.

    ::

        dim 2
        symmetric_complement        # optional: F(1-u) = F(u) fills the table
        offsets
        0 0                         # first offset must be the origin
        1 0
        0 1
        values
        010 1                       # bitmask (binary, MSB = last offset) and value
        ...

    Lines starting with ``#`` and trailing comments are ignored.  Binary masks
    are written most-significant bit first, so ``010`` selects ``offsets[1]``.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    dim = None
    symmetric = False
    offsets = []
    entries = []
    section = None
    try:
        for line in lines:
            parts = line.split()
            key = parts[0].lower()
            if key == "dim":
                dim = int(parts[1])
                section = None
            elif key == "symmetric_complement":
                symmetric = len(parts) == 1 or parts[1].lower() in ("1", "true", "yes")
                section = None
            elif key in ("offsets", "values"):
                section = key
            elif section == "offsets":
                offsets.append(tuple(int(p) for p in parts))
            elif section == "values":
                if len(parts) != 2:
                    raise ConfigurationError(f"bad values line: {line!r}")
                entries.append((parts[0], float(parts[1])))
            else:
                raise ConfigurationError(f"unexpected line: {line!r}")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"cannot parse potential file: {exc}") from exc
    if dim is None:
        raise ConfigurationError("missing 'dim' header")
    if not offsets:
        raise ConfigurationError("missing offsets")
    if any(len(o) != dim for o in offsets):
        raise ConfigurationError("offset dimension does not match 'dim'")
    if any(offsets[0]):
        raise ConfigurationError("first offset must be the origin")
    stencil = Stencil(tuple(offsets))
    n = stencil.size
    full = (1 << n) - 1
    table = {}
    for tok, val in entries:
        try:
            m = _parse_mask(tok, n)
        except ValueError as exc:
            raise ConfigurationError(f"bad bitmask {tok!r}") from exc
        if not 0 <= m <= full:
            raise ConfigurationError(f"bitmask {tok!r} out of range")
        if m in table and table[m] != val:
            raise ConfigurationError(f"conflicting values for bitmask {tok!r}")
        table[m] = val
    if symmetric:
        for m, val in list(table.items()):
            c = full ^ m
            if c in table and table[c] != val:
                raise ConfigurationError(f"complement of {m:0{n}b} has a different value")
            table[c] = val
    missing = [m for m in range(full + 1) if m not in table]
    if missing:
        shown = ", ".join(f"{m:0{n}b}" for m in missing[:5])
        raise ConfigurationError(f"{len(missing)} table entries missing (e.g. {shown})")
    return StencilPotential(stencil, np.array([table[m] for m in range(full + 1)]), name=name)


def load_potential(path) -> StencilPotential:
    """Read a potential from a file, or resolve a built-in name."""
    import os

    p = str(path)
    if p in BUILTIN_POTENTIALS:
        return BUILTIN_POTENTIALS[p]()
    with open(p, encoding="utf-8") as fh:
        text = fh.read()
    return parse_potential(text, name=os.path.splitext(os.path.basename(p))[0])


def format_potential(F: StencilPotential) -> str:
    n = F.size
    out = [f"dim {F.stencil.dim}", "offsets"]
    out += [" ".join(str(c) for c in o) for o in F.stencil.offsets]
    out.append("values")
    out += [f"{m:0{n}b} {float(v)!r}" for m, v in enumerate(F.values)]
    return "\n".join(out) + "\n"
