"""Truncated Fourier series on the unit torus.

A field is stored by its coefficients c_n, n = -N..N, in the convention
u(x) = sum_n c_n exp(2 pi i n x).  Every norm and functional used by the rest
of the package lives here.  Most functions come in two flavours: a method-free
version acting on a coefficient array of shape (..., 2N+1) (used by the
vectorised ensemble code) and a wrapper taking a :class:`TorusField`.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

GFL1_MAGIC = b"GFL1"
_HEADER = struct.Struct("<4sIB")


class Symmetry(str, Enum):
    COMPLEX = "complex"
    REAL = "real"

    @classmethod
    def parse(cls, value: "Symmetry | str") -> "Symmetry":
        if isinstance(value, Symmetry):
            return value
        aliases = {"complex": cls.COMPLEX, "real": cls.REAL, "real-symmetric": cls.REAL}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown symmetry {value!r}; expected 'complex' or 'real'") from None


def mode_numbers(N: int) -> np.ndarray:
    """Integer frequencies -N..N in storage order."""
    return np.arange(-N, N + 1)


def bracket(N: int) -> np.ndarray:
    """Japanese bracket <n> = (1 + n^2)^(1/2) for n = -N..N."""
    n = mode_numbers(N).astype(float)
    return np.sqrt(1.0 + n * n)


def next_pow2(k: int) -> int:
    g = 1
    while g < k:
        g *= 2
    return g


def dealiased_grid_size(N: int, p: float = 6) -> int:
    """Power-of-two grid on which the trapezoid rule integrates |u|^p exactly.

    The default p = 6 gives the quintic dealiasing rule G >= 6N + 2; larger even
    integer exponents need G >= pN + 2.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    need = 6 * N + 2
    if float(p).is_integer() and int(p) % 2 == 0 and p > 6:
        need = max(need, int(p) * N + 2)
    return next_pow2(need)


def _modes_of(coeffs: np.ndarray) -> int:
    width = coeffs.shape[-1]
    if width % 2 != 1:
        raise ValueError(f"coefficient axis must have odd length 2N+1, got {width}")
    return (width - 1) // 2


# ---------------------------------------------------------------------------
# array-level transforms and functionals
# ---------------------------------------------------------------------------


def coeffs_to_grid(coeffs: np.ndarray, G: int) -> np.ndarray:
    """Evaluate sum_n c_n e^{2 pi i n j / G} for every row of ``coeffs``."""
    coeffs = np.asarray(coeffs)
    N = _modes_of(coeffs)
    if G < 2 * N + 1:
        raise ValueError(f"grid size {G} cannot resolve {2 * N + 1} modes (need G >= 2N+1)")
    buf = np.zeros(coeffs.shape[:-1] + (G,), dtype=complex)
    buf[..., : N + 1] = coeffs[..., N:]
    if N:
        buf[..., G - N :] = coeffs[..., :N]
    return sfft.ifft(buf, axis=-1, norm="forward")


def grid_to_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    """First 2N+1 Fourier coefficients of the trigonometric interpolant."""
    values = np.asarray(values)
    G = values.shape[-1]
    if G < 2 * N + 1:
        raise ValueError(f"grid size {G} cannot resolve {2 * N + 1} modes (need G >= 2N+1)")
    a = sfft.fft(values, axis=-1, norm="forward")
    if N == 0:
        return a[..., :1].copy()
    return np.concatenate([a[..., G - N :], a[..., : N + 1]], axis=-1)


def mass_of(coeffs: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(coeffs) ** 2, axis=-1)


def sobolev_of(coeffs: np.ndarray, s: float) -> np.ndarray:
    N = _modes_of(coeffs)
    w = bracket(N) ** (2.0 * s)
    return np.sqrt(np.sum(w * np.abs(coeffs) ** 2, axis=-1))


def fourier_lebesgue_of(coeffs: np.ndarray, s: float, p: float) -> np.ndarray:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    N = _modes_of(coeffs)
    w = bracket(N) ** (s * p)
    return np.sum(w * np.abs(coeffs) ** p, axis=-1) ** (1.0 / p)


def lp_power_of(coeffs: np.ndarray, p: float, G: int | None = None) -> np.ndarray:
    """Trapezoid-rule value of the integral of |u|^p over the torus."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    N = _modes_of(coeffs)
    G = dealiased_grid_size(N, p) if G is None else G
    v = coeffs_to_grid(coeffs, G)
    return np.mean(np.abs(v) ** p, axis=-1)


def kinetic_of(coeffs: np.ndarray) -> np.ndarray:
    """Half the squared L2 norm of the derivative."""
    N = _modes_of(coeffs)
    k = 2.0 * np.pi * mode_numbers(N)
    return 0.5 * np.sum(k * k * np.abs(coeffs) ** 2, axis=-1)


def hamiltonian_of(coeffs: np.ndarray, equation: str = "nls", p: float = 6) -> np.ndarray:
    """Truncated Hamiltonian for a batch of coefficient rows."""
    N = _modes_of(coeffs)
    G = dealiased_grid_size(N, p)
    v = coeffs_to_grid(coeffs, G)
    if equation == "nls":
        pot = np.mean(np.abs(v) ** p, axis=-1)
    elif equation == "gkdv":
        pot = np.mean(v.real**p, axis=-1)
    else:
        raise ValueError(f"unknown equation {equation!r}; expected 'nls' or 'gkdv'")
    return kinetic_of(coeffs) - pot / p


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto real-symmetric coefficients c_{-n} = conj(c_n)."""
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1]))


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TorusField:
    """Immutable truncated Fourier series with 2N+1 coefficients.

    For ``symmetry="real"`` the constructor checks c_{-n} = conj(c_n) up to a
    small relative tolerance and then stores the exactly symmetrised array.
    """

    coeffs: np.ndarray
    symmetry: Symmetry = Symmetry.COMPLEX

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=complex, copy=True)
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        _modes_of(c)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        sym = Symmetry.parse(self.symmetry)
        if sym is Symmetry.REAL:
            scale = float(np.max(np.abs(c), initial=0.0))
            err = float(np.max(np.abs(c - np.conj(c[::-1])), initial=0.0))
            if err > 1e-10 * max(scale, 1.0):
                raise ValueError(
                    f"coefficients are not real-symmetric (max |c_-n - conj c_n| = {err:.3e})"
                )
            c = symmetrize(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "symmetry", sym)

    # construction helpers
    @classmethod
    def zeros(cls, N: int, symmetry: Symmetry | str = Symmetry.COMPLEX) -> "TorusField":
        if N < 0:
            raise ValueError("N must be nonnegative")
        return cls(np.zeros(2 * N + 1, dtype=complex), symmetry)

    @classmethod
    def from_modes(
        cls, N: int, modes: dict[int, complex], symmetry: Symmetry | str = Symmetry.COMPLEX
    ) -> "TorusField":
        """Build a field from a sparse {n: c_n} mapping."""
        c = np.zeros(2 * N + 1, dtype=complex)
        for n, val in modes.items():
            if abs(n) > N:
                raise ValueError(f"mode {n} outside |n| <= {N}")
            c[n + N] = val
        return cls(c, symmetry)

    @property
    def N(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def is_real(self) -> bool:
        return self.symmetry is Symmetry.REAL

    def coefficient(self, n: int) -> complex:
        return complex(self.coeffs[n + self.N])

    def with_coeffs(self, coeffs: np.ndarray) -> "TorusField":
        return TorusField(coeffs, self.symmetry)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TorusField):
            return NotImplemented
        return self.symmetry is other.symmetry and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash((self.symmetry, self.coeffs.tobytes()))

    def __repr__(self) -> str:
        return f"TorusField(N={self.N}, symmetry={self.symmetry.value})"


@dataclass(frozen=True, eq=False)
class GridSample:
    """Values of a field at x_j = j/G, j = 0..G-1, with G a power of two."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=complex, copy=True)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("grid values must be a nonempty one-dimensional array")
        G = v.size
        if G & (G - 1):
            raise ValueError(f"grid size must be a power of two, got {G}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def G(self) -> int:
        return self.values.size

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.G) / self.G


@dataclass(frozen=True)
class NormSpec:
    """One of the norms the experiments record along trajectories."""

    kind: str
    s: float = 0.0
    p: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("sobolev", "lebesgue", "fourier-lebesgue"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind != "sobolev" and self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @classmethod
    def parse(cls, label: str) -> "NormSpec":
        """Inverse of :attr:`label`: ``h_0.25``, ``l_6`` or ``fl_0.5_4``."""
        parts = label.split("_")
        try:
            if parts[0] == "h" and len(parts) == 2:
                return cls("sobolev", s=float(parts[1]))
            if parts[0] == "l" and len(parts) == 2:
                return cls("lebesgue", p=float(parts[1]))
            if parts[0] == "fl" and len(parts) == 3:
                return cls("fourier-lebesgue", s=float(parts[1]), p=float(parts[2]))
        except ValueError:
            pass
        raise ValueError(f"cannot parse norm label {label!r}")

    @property
    def label(self) -> str:
        if self.kind == "sobolev":
            return f"h_{self.s:g}"
        if self.kind == "lebesgue":
            return f"l_{self.p:g}"
        return f"fl_{self.s:g}_{self.p:g}"

    def of_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        if self.kind == "sobolev":
            return sobolev_of(coeffs, self.s)
        if self.kind == "lebesgue":
            return lp_power_of(coeffs, self.p) ** (1.0 / self.p)
        return fourier_lebesgue_of(coeffs, self.s, self.p)

    def __call__(self, field: TorusField) -> float:
        return float(self.of_coeffs(field.coeffs))


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------


def synthesize(field: TorusField, G: int | None = None) -> GridSample:
    """Grid values of ``field``; G defaults to the dealiased size."""
    G = dealiased_grid_size(field.N) if G is None else int(G)
    return GridSample(coeffs_to_grid(field.coeffs, G))


def analyze(
    sample: GridSample, N: int, symmetry: Symmetry | str = Symmetry.COMPLEX
) -> TorusField:
    c = grid_to_coeffs(sample.values, N)
    if Symmetry.parse(symmetry) is Symmetry.REAL:
        c = symmetrize(c)
    return TorusField(c, symmetry)


def sobolev_norm(field: TorusField, s: float) -> float:
    return float(sobolev_of(field.coeffs, s))


def lebesgue_norm(field: TorusField, p: float) -> float:
    return float(lp_power_of(field.coeffs, p) ** (1.0 / p))


def fourier_lebesgue_norm(field: TorusField, s: float, p: float) -> float:
    return float(fourier_lebesgue_of(field.coeffs, s, p))


def mass(field: TorusField) -> float:
    return float(mass_of(field.coeffs))


def hamiltonian(field: TorusField, equation: str = "nls", p: float = 6) -> float:
    if equation == "gkdv" and not field.is_real:
        raise ValueError("the gKdV Hamiltonian needs a real-symmetric field")
    return float(hamiltonian_of(field.coeffs, equation, p))


def project_low(field: TorusField, k: int) -> TorusField:
    """Keep only the frequencies |n| <= 2**k."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    cutoff = 2**k
    c = np.array(field.coeffs)
    c[np.abs(mode_numbers(field.N)) > cutoff] = 0.0
    return field.with_coeffs(c)


def remove_mean(field: TorusField) -> TorusField:
    c = np.array(field.coeffs)
    c[field.N] = 0.0
    return field.with_coeffs(c)


def fl_embedding_constant(s: float = 0.2, a: float = 0.6, p: float = 4.0,
                          n_max: int = 10**6) -> float:
    """Constant C with ||u||_{H^s} <= C ||u||_{FL^{s + a/2, p}} for p > 2.

    Hoelder in the sequence space gives C = ||<n>^{-a/2}||_{l^r} with
    1/2 = 1/r + 1/p.  The series is summed exactly for |n| <= n_max and the
    rest is bounded above by the integral of x^{-a r / 2}, so the returned
    value is a guaranteed upper bound for the true constant.
    """
    if p <= 2:
        raise ValueError("the embedding constant needs p > 2")
    r = 1.0 / (0.5 - 1.0 / p)
    kappa = a * r / 2.0
    if kappa <= 1:
        raise ValueError(f"need a*r/2 > 1 for a convergent constant, got {kappa}")
    n = np.arange(1, n_max + 1, dtype=float)
    head = 1.0 + 2.0 * math.fsum((1.0 + n * n) ** (-kappa / 2.0))
    tail = 2.0 * n_max ** (1.0 - kappa) / (kappa - 1.0)
    return (head + tail) ** (1.0 / r)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def to_gfl1_bytes(field: TorusField) -> bytes:
    flag = 1 if field.is_real else 0
    pairs = np.empty((field.coeffs.size, 2), dtype="<f8")
    pairs[:, 0] = field.coeffs.real
    pairs[:, 1] = field.coeffs.imag
    return _HEADER.pack(GFL1_MAGIC, field.N, flag) + pairs.tobytes()


def from_gfl1_bytes(data: bytes) -> TorusField:
    if len(data) < _HEADER.size:
        raise ValueError("truncated GFL1 header")
    magic, N, flag = _HEADER.unpack_from(data)
    if magic != GFL1_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {GFL1_MAGIC!r}")
    if flag not in (0, 1):
        raise ValueError(f"bad symmetry flag {flag}")
    expected = _HEADER.size + (2 * N + 1) * 16
    if len(data) != expected:
        raise ValueError(f"GFL1 payload has {len(data)} bytes, expected {expected}")
    pairs = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(-1, 2)
    return TorusField(pairs[:, 0] + 1j * pairs[:, 1], Symmetry.REAL if flag else Symmetry.COMPLEX)


def write_gfl1(field: TorusField, path: str | Path) -> None:
    Path(path).write_bytes(to_gfl1_bytes(field))


def read_gfl1(path: str | Path) -> TorusField:
    return from_gfl1_bytes(Path(path).read_bytes())


def to_csv_text(field: TorusField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "re", "im"])
    for n, c in zip(mode_numbers(field.N), field.coeffs):
        w.writerow([int(n), repr(float(c.real)), repr(float(c.imag))])
    return buf.getvalue()


def from_csv_text(text: str, symmetry: Symmetry | str = Symmetry.COMPLEX) -> TorusField:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty coefficient table")
    ns = [int(r["n"]) for r in rows]
    N = max(abs(n) for n in ns)
    if sorted(ns) != list(range(-N, N + 1)):
        raise ValueError("coefficient table must list every n in -N..N exactly once")
    c = np.zeros(2 * N + 1, dtype=complex)
    for r, n in zip(rows, ns):
        c[n + N] = complex(float(r["re"]), float(r["im"]))
    return TorusField(c, symmetry)


def stack(fields: Sequence[TorusField]) -> np.ndarray:
    """Coefficient matrix (len(fields), 2N+1) of fields sharing one N."""
    Ns = {f.N for f in fields}
    if len(Ns) != 1:
        raise ValueError(f"fields have mixed mode counts {sorted(Ns)}")
    return np.stack([f.coeffs for f in fields])


def unstack(coeffs: np.ndarray, symmetry: Symmetry | str = Symmetry.COMPLEX) -> list[TorusField]:
    return [TorusField(row, symmetry) for row in np.atleast_2d(coeffs)]
