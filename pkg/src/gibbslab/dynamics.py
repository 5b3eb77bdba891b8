"""Galerkin-truncated quintic NLS and gKdV flows.

Truncated systems (|n| <= N, nonlinearity projected back onto those modes):

* NLS   i u_t + u_xx + |u|^4 u = 0, i.e. dc_n/dt = -i (2 pi n)^2 c_n + i P_N(|u|^4 u)_n
* gKdV  u_t + u_xxx + (u^5)_x = 0, i.e. dc_n/dt = i (2 pi n)^3 c_n - 2 pi i n P_N(u^5)_n

All products are formed on a grid of size >= 6N + 2, so the projected
nonlinearities are computed without aliasing.  Every stepper works on a batch
of coefficient rows of shape (m, 2N+1).

NLS schemes
    ``conservative``  Crank-Nicolson with the discrete gradient of (1/6) int |u|^6.
                      Mass and the truncated Hamiltonian are conserved up to the
                      fixed-point tolerance; second order; symmetric.
    ``strang``        Strang splitting: exact linear flow and a unitary Galerkin
                      nonlinear substep (see :func:`nls_nonlinear_substep`).
    ``linear``        linear flow only.
    ``frozen``        identity (flow switched off).
gKdV schemes
    ``ifrk4``         integrating-factor classical Runge-Kutta 4.
    ``linear`` / ``frozen`` as above.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .field import (
    NormSpec,
    Symmetry,
    TorusField,
    coeffs_to_grid,
    dealiased_grid_size,
    grid_to_coeffs,
    hamiltonian_of,
    mass_of,
    mode_numbers,
    symmetrize,
)

# dt * (2 pi N)^3 above this value triggers a stability warning for gKdV
GKDV_STABILITY_CONSTANT = 1000.0

NLS_SCHEMES = ("conservative", "strang", "linear", "frozen")
GKDV_SCHEMES = ("ifrk4", "linear", "frozen")


class IntegrationFailure(RuntimeError):
    """Non-finite state or failed implicit solve; ``time`` records when."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


# ---------------------------------------------------------------------------
# NLS
# ---------------------------------------------------------------------------


def _nls_symbol(N: int) -> np.ndarray:
    k = 2.0 * np.pi * mode_numbers(N)
    return k * k


def nls_linear(c: np.ndarray, h: float) -> np.ndarray:
    N = (c.shape[-1] - 1) // 2
    return c * np.exp(-1j * _nls_symbol(N) * h)


def _apply_exp_multiplier(c: np.ndarray, V: np.ndarray, h: float, G: int) -> np.ndarray:
    """exp(i h P_N V P_N) c by scaled Taylor series; V is a real grid function.

    P_N V P_N is Hermitian on span{e_n : |n| <= N} because the grid resolves
    all products exactly, so the result is unitary up to truncation of the
    series.  The step is split into pieces with h max|V| <= 1 so each series
    converges in a few terms without cancellation.
    """
    N = (c.shape[-1] - 1) // 2
    pieces = max(1, math.ceil(abs(h) * float(np.max(np.abs(V), initial=0.0))))
    hk = h / pieces
    out = c.copy()
    for _ in range(pieces):
        term = out.copy()
        scale = np.max(np.abs(out), axis=-1, keepdims=True) + 1e-300
        for k in range(1, 60):
            term = (1j * hk / k) * grid_to_coeffs(V * coeffs_to_grid(term, G), N)
            out = out + term
            if np.all(np.max(np.abs(term), axis=-1, keepdims=True) <= 1e-17 * scale):
                break
    return out


def _nonlinear_substep_rows(c: np.ndarray, h: float, tol: float = 1e-14,
                            max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    c = np.atleast_2d(c)
    N = (c.shape[-1] - 1) // 2
    G = dealiased_grid_size(N)
    v0 = coeffs_to_grid(c, G)
    a0 = np.abs(v0) ** 4
    c1 = grid_to_coeffs(v0 * np.exp(1j * h * a0), N)
    active = np.arange(c.shape[0])
    failed: list[int] = []
    for _ in range(max_iter):
        if active.size == 0:
            break
        a1 = np.abs(coeffs_to_grid(c1[active], G)) ** 4
        new = _apply_exp_multiplier(c[active], 0.5 * (a0[active] + a1), h, G)
        diff = np.max(np.abs(new - c1[active]), axis=-1)
        scale = np.max(np.abs(new), axis=-1) + 1e-300
        c1[active] = new
        done = diff <= tol * scale
        blown = ~np.isfinite(diff)
        failed.extend(active[blown])
        active = active[~(done | blown)]
    ok = np.ones(c.shape[0], dtype=bool)
    ok[active] = False
    ok[np.asarray(failed, dtype=int)] = False
    return c1, ok


def nls_nonlinear_substep(c: np.ndarray, h: float, tol: float = 1e-14,
                          max_iter: int = 100) -> np.ndarray:
    """Symmetric unitary approximation of the Galerkin flow of dc/dt = i P_N(|u|^4 u).

    Solves c1 = exp(i h P_N V P_N) c0 with V = (|u0|^4 + |u1|^4) / 2 by fixed
    point iteration, starting from the pointwise phase rotation.  The map is
    exactly mass preserving, exact for constant data, time symmetric and
    second-order accurate.
    """
    out, _ = _nonlinear_substep_rows(c, h, tol, max_iter)
    return out.reshape(np.shape(c))


def nls_strang(c: np.ndarray, h: float) -> np.ndarray:
    return _strang_rows(c, h)[0].reshape(np.shape(c))


def _strang_rows(c: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    half, ok1 = _nonlinear_substep_rows(c, 0.5 * h)
    out, ok2 = _nonlinear_substep_rows(nls_linear(half, h), 0.5 * h)
    return out, ok1 & ok2


def nls_conservative(c: np.ndarray, h: float, tol: float = 1e-14,
                     max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Discrete-gradient Crank-Nicolson step for a batch of rows.

    (c1 - c0)/h = -i D (c0 + c1)/2 + i P_N[W (u0 + u1)/2] with
    W = (|u1|^4 + |u1|^2 |u0|^2 + |u0|^4) / 3.  Rows that fail to converge
    are reported in the returned mask.
    """
    c = np.atleast_2d(c)
    N = (c.shape[-1] - 1) // 2
    G = dealiased_grid_size(N)
    d = _nls_symbol(N)
    plus = 1.0 + 0.5j * h * d
    minus_c = (1.0 - 0.5j * h * d) * c
    v0 = coeffs_to_grid(c, G)
    b = np.abs(v0) ** 2
    c1 = nls_linear(c, h)
    active = np.arange(c.shape[0])
    failed: list[int] = []
    for _ in range(max_iter):
        if active.size == 0:
            break
        v1 = coeffs_to_grid(c1[active], G)
        a = np.abs(v1) ** 2
        ba = b[active]
        W = (a * a + a * ba + ba * ba) / 3.0
        nl = grid_to_coeffs(W * 0.5 * (v0[active] + v1), N)
        new = (minus_c[active] + 1j * h * nl) / plus
        diff = np.max(np.abs(new - c1[active]), axis=-1)
        scale = np.max(np.abs(new), axis=-1) + 1e-300
        c1[active] = new
        done = diff <= tol * scale
        blown = ~np.isfinite(diff)
        failed.extend(active[blown])
        active = active[~(done | blown)]
    ok = np.ones(c.shape[0], dtype=bool)
    ok[active] = False
    ok[np.asarray(failed, dtype=int)] = False
    return c1, ok


# ---------------------------------------------------------------------------
# gKdV
# ---------------------------------------------------------------------------


def _gkdv_symbol(N: int) -> np.ndarray:
    return 1j * (2.0 * np.pi * mode_numbers(N)) ** 3


def gkdv_linear(c: np.ndarray, h: float) -> np.ndarray:
    N = (c.shape[-1] - 1) // 2
    return c * np.exp(_gkdv_symbol(N) * h)


def gkdv_nonlinearity(c: np.ndarray) -> np.ndarray:
    """-d/dx P_N(u^5) in coefficients, for real-symmetric rows."""
    N = (c.shape[-1] - 1) // 2
    G = dealiased_grid_size(N)
    u = coeffs_to_grid(c, G).real
    return -2j * np.pi * mode_numbers(N) * grid_to_coeffs(u**5 + 0j, N)


def gkdv_ifrk4(c: np.ndarray, h: float) -> np.ndarray:
    """Integrating-factor RK4: RK4 on v = e^{-tL} c, written back in c."""
    N = (c.shape[-1] - 1) // 2
    E = np.exp(_gkdv_symbol(N) * 0.5 * h)
    E2 = E * E
    f = gkdv_nonlinearity
    k1 = f(c)
    k2 = f(E * (c + 0.5 * h * k1))
    k3 = f(E * c + 0.5 * h * k2)
    k4 = f(E2 * c + h * E * k3)
    out = E2 * c + (h / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
    return symmetrize(out)


# ---------------------------------------------------------------------------
# public single-field steps
# ---------------------------------------------------------------------------


def _check_finite(c: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(c)):
        raise IntegrationFailure(f"non-finite coefficients at t={t:.6g}", t)


def strang_step_nls(field: TorusField, dt: float) -> TorusField:
    """One Strang step of the truncated NLS."""
    if dt == 0:
        return field
    out = nls_strang(field.coeffs[None, :], dt)[0]
    _check_finite(out, dt)
    return field.with_coeffs(out)


def conservative_step_nls(field: TorusField, dt: float) -> TorusField:
    if dt == 0:
        return field
    out, ok = nls_conservative(field.coeffs[None, :], dt)
    _check_finite(out, dt)
    if not ok[0]:
        raise IntegrationFailure("Crank-Nicolson fixed point did not converge", dt)
    return field.with_coeffs(out[0])


def ifrk4_step_gkdv(field: TorusField, dt: float) -> TorusField:
    """One integrating-factor RK4 step of the truncated gKdV (real fields only)."""
    if not field.is_real:
        raise ValueError("gKdV needs a real-symmetric field")
    if dt == 0:
        return field
    out = gkdv_ifrk4(field.coeffs[None, :], dt)[0]
    _check_finite(out, dt)
    return field.with_coeffs(out)


# ---------------------------------------------------------------------------
# specs, trajectories, drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionSpec:
    equation: str
    N: int
    dt: float
    T: float
    stride: int = 1
    direction: int = 1
    scheme: str | None = None

    def __post_init__(self) -> None:
        if self.equation not in ("nls", "gkdv"):
            raise ValueError(f"equation must be 'nls' or 'gkdv', got {self.equation!r}")
        if self.N < 0:
            raise ValueError(f"N must be nonnegative, got {self.N}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if self.T > 0 and self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds T={self.T}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        allowed = NLS_SCHEMES if self.equation == "nls" else GKDV_SCHEMES
        scheme = allowed[0] if self.scheme is None else self.scheme
        if scheme not in allowed:
            raise ValueError(f"scheme {scheme!r} not available for {self.equation}; choose from {allowed}")
        object.__setattr__(self, "scheme", scheme)
        if self.equation == "gkdv" and scheme == "ifrk4":
            cfl = self.dt * (2.0 * np.pi * self.N) ** 3
            if cfl > GKDV_STABILITY_CONSTANT:
                warnings.warn(
                    f"dt*(2 pi N)^3 = {cfl:.3g} exceeds {GKDV_STABILITY_CONSTANT:g}; "
                    "the gKdV integrator may be inaccurate or unstable",
                    RuntimeWarning, stacklevel=2,
                )

    @property
    def symmetry(self) -> Symmetry:
        return Symmetry.REAL if self.equation == "gkdv" else Symmetry.COMPLEX

    def step_sizes(self) -> list[float]:
        """Uniform steps of size dt, the last one shortened to land on T."""
        if self.T == 0:
            return []
        n = max(1, math.ceil(self.T / self.dt - 1e-9))
        hs = [self.dt] * n
        hs[-1] = self.T - self.dt * (n - 1)
        return hs


def _stepper(spec: EvolutionSpec) -> Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]]:
    def wrap(fn):
        return lambda c, h: (fn(c, h), np.ones(c.shape[0], dtype=bool))

    if spec.scheme == "frozen":
        return lambda c, h: (c, np.ones(c.shape[0], dtype=bool))
    if spec.equation == "nls":
        return {
            "conservative": nls_conservative,
            "strang": _strang_rows,
            "linear": wrap(nls_linear),
        }[spec.scheme]
    return {"ifrk4": wrap(gkdv_ifrk4), "linear": wrap(gkdv_linear)}[spec.scheme]


def _reverse(c: np.ndarray, equation: str) -> np.ndarray:
    """Time-reversal symmetry: conjugation (NLS) or parity x -> -x (gKdV)."""
    return np.conj(c) if equation == "nls" else c[..., ::-1].copy()


MAX_SPLIT = 64


def _robust_step(step, c: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One step of size h; failed rows are redone with 2, 4, ... equal substeps.

    Overflow inside a diverging solve is expected here and handled by the
    retry, so floating-point warnings are silenced for the duration.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        new, ok = step(c, h)
        ok = ok & np.all(np.isfinite(new), axis=-1)
        pieces = 2
        while not ok.all() and pieces <= MAX_SPLIT:
            bad = np.nonzero(~ok)[0]
            sub = c[bad]
            sub_ok = np.ones(bad.size, dtype=bool)
            for _ in range(pieces):
                sub, good = step(sub, h / pieces)
                sub_ok &= good & np.all(np.isfinite(sub), axis=-1)
            new[bad] = sub
            ok[bad] = sub_ok
            pieces *= 2
    return new, ok


def evolve_ensemble(coeffs: np.ndarray, spec: EvolutionSpec,
                    on_step: Callable[[int, float, np.ndarray, np.ndarray], None] | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Advance every row of ``coeffs`` to time T (or -T when direction = -1).

    ``on_step(k, t, coeffs, alive)`` is called after every step k >= 1 with
    the current rows (already mapped back to the requested time direction).
    A row whose implicit solve fails to converge (or turns non-finite) is
    retried with the step split into 2, 4, ..., MAX_SPLIT equal substeps; rows
    that still fail are frozen and flagged false in the returned mask.
    """
    c = np.array(np.atleast_2d(coeffs), dtype=complex)
    if c.shape[-1] != 2 * spec.N + 1:
        raise ValueError(f"rows have {c.shape[-1]} coefficients, spec expects {2 * spec.N + 1}")
    step = _stepper(spec)
    backwards = spec.direction < 0
    if backwards:
        c = _reverse(c, spec.equation)
    alive = np.ones(c.shape[0], dtype=bool)
    t = 0.0
    for k, h in enumerate(spec.step_sizes(), start=1):
        idx = np.nonzero(alive)[0]
        if idx.size:
            new, ok = _robust_step(step, c[idx], h)
            c[idx[ok]] = new[ok]
            alive[idx[~ok]] = False
        t += h
        if on_step is not None:
            view = _reverse(c, spec.equation) if backwards else c
            on_step(k, spec.direction * t, view, alive)
    if backwards:
        c = _reverse(c, spec.equation)
    return c, alive


@dataclass
class Trajectory:
    times: np.ndarray
    mass: np.ndarray
    hamiltonian: np.ndarray
    norms: dict[str, np.ndarray]
    equation: str = "nls"
    fields: list[TorusField] | None = None
    failed: bool = False
    failure_time: float | None = None

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            labels = list(self.norms)
            w.writerow(["t", "mass", "hamiltonian", *labels])
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(self.mass[i])), repr(float(self.hamiltonian[i])),
                            *(repr(float(self.norms[k][i])) for k in labels)])


def evolve(initial: TorusField, spec: EvolutionSpec, norms: Sequence[NormSpec] = (),
           keep_fields: bool = False) -> Trajectory:
    """Integrate one field, recording norms, mass and Hamiltonian every ``stride`` steps.

    The final time is always recorded.  A non-finite state ends the run early
    with ``failed`` set and the time of failure stored.
    """
    if initial.N != spec.N:
        raise ValueError(f"initial data has N={initial.N}, spec has N={spec.N}")
    if spec.equation == "gkdv" and not initial.is_real:
        raise ValueError("gKdV needs real-symmetric initial data")
    hs = spec.step_sizes()
    times: list[float] = []
    rows: list[np.ndarray] = []

    def record(t: float, c: np.ndarray) -> None:
        times.append(t)
        rows.append(c.copy())

    record(0.0, initial.coeffs[None, :])
    state = {"failed": False, "time": None}

    def on_step(k: int, t: float, c: np.ndarray, alive: np.ndarray) -> None:
        if state["failed"]:
            return
        if not alive[0]:
            state["failed"], state["time"] = True, t
            return
        if k % spec.stride == 0 or k == len(hs):
            record(t, c)

    evolve_ensemble(initial.coeffs[None, :], spec, on_step)
    C = np.concatenate(rows, axis=0)
    if spec.symmetry is Symmetry.REAL:
        C = symmetrize(C)
    traj = Trajectory(
        times=np.array(times),
        mass=mass_of(C),
        hamiltonian=hamiltonian_of(C, spec.equation),
        norms={ns.label: ns.of_coeffs(C) for ns in norms},
        equation=spec.equation,
        fields=[TorusField(r, initial.symmetry) for r in C] if keep_fields else None,
        failed=state["failed"],
        failure_time=state["time"],
    )
    return traj


def final_field(initial: TorusField, spec: EvolutionSpec) -> TorusField:
    c, alive = evolve_ensemble(initial.coeffs[None, :], spec)
    if not alive[0]:
        raise IntegrationFailure("integration failed before reaching T", spec.T)
    return initial.with_coeffs(c[0])


@dataclass(frozen=True)
class ConservationReport:
    mass_drift: float
    hamiltonian_drift: float

    def as_dict(self) -> dict[str, float]:
        return {"mass_drift": self.mass_drift, "hamiltonian_drift": self.hamiltonian_drift}


def drift(log: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(np.asarray(log) - log[0]))) / scale


def conservation_report(traj: Trajectory) -> ConservationReport:
    """Largest deviation from the t = 0 value along the record.

    Mass drift is relative to M(0) (absolute when M(0) = 0); the Hamiltonian
    drift is |H(t) - H(0)| / (1 + |H(0)|), since H may vanish.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    m0 = float(traj.mass[0])
    return ConservationReport(
        drift(traj.mass, m0 if m0 > 0 else 1.0),
        drift(traj.hamiltonian, 1.0 + abs(float(traj.hamiltonian[0]))),
    )


def convergence_ratio(initial: TorusField, equation: str, scheme: str, T: float,
                      steps: int, refine: int = 64) -> float:
    """err(T/steps) / err(T/(2 steps)) against a run with step T/(refine*steps).

    A value near 2^order confirms the scheme's order.
    """
    def run(n: int) -> np.ndarray:
        spec = EvolutionSpec(equation, initial.N, T / n, T, scheme=scheme)
        return evolve_ensemble(initial.coeffs[None, :], spec)[0][0]

    ref = run(refine * steps)
    e1 = np.linalg.norm(run(steps) - ref)
    e2 = np.linalg.norm(run(2 * steps) - ref)
    return float(e1 / e2)
