"""Fock-truncated Rabi-Stark Hamiltonian, coherent initial states, exact
unitary evolution and linear entanglement entropy.

Basis ordering: index ``s * N + n`` with ``s = 0`` for spin down and ``s = 1``
for spin up, ``n = 0 .. N-1`` the photon number.  States are plain complex
numpy vectors of length ``2N`` in that order.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .errors import CapExceededError, NumericError, TruncationTooSmallError
from .model import ModelParams, PhasePoint, _as_point

DEFAULT_WINDOW = (0.0, 500.0)
DEFAULT_DT = 0.1
MAX_NORM_DEFICIT = 1e-8
TRUNCATION_CAP = 512
# rows of the (2N, T) amplitude block processed at once
_TIME_CHUNK = 2048


@dataclass(frozen=True)
class FockTruncation:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"Fock truncation N must be an integer >= 1, got {self.N!r}")

    @property
    def dim(self) -> int:
        return 2 * self.N


def _trunc(trunc) -> FockTruncation:
    return trunc if isinstance(trunc, FockTruncation) else FockTruncation(int(trunc))


def build_hamiltonian(params: ModelParams, trunc) -> np.ndarray:
    """Dense ``2N x 2N`` matrix of ``(omega/2 + U a^dag a) sigma_z + omega0 a^dag a + g (a^dag + a) sigma_x``.

    All entries are real; the matrix is returned as float64.
    """
    N = _trunc(trunc).N
    n = np.arange(N, dtype=float)
    H = np.zeros((2 * N, 2 * N))
    idx = np.arange(N)
    H[idx, idx] = -(0.5 * params.omega + params.U * n) + params.omega0 * n
    H[N + idx, N + idx] = (0.5 * params.omega + params.U * n) + params.omega0 * n
    if N > 1:
        # (a^dag + a) couples n <-> n+1 with sqrt(n+1); sigma_x flips the spin
        amp = params.g * np.sqrt(n[1:])
        lo, hi = idx[:-1], idx[1:]
        H[lo, N + hi] = amp
        H[N + hi, lo] = amp
        H[N + lo, hi] = amp
        H[hi, N + lo] = amp
    return H


def spin_amplitudes(q1: float, p1: float) -> np.ndarray:
    """Bloch coherent spinor ``(down, up)`` for ``tau = (q1 + i p1) / sqrt(2 - q1^2 - p1^2)``."""
    r = q1 * q1 + p1 * p1
    # (1 + |tau|^2)^(-1/2) = sqrt((2 - r) / 2) and tau (1 + |tau|^2)^(-1/2) = (q1 + i p1) / sqrt(2)
    return np.array([math.sqrt((2.0 - r) / 2.0), (q1 + 1j * p1) / math.sqrt(2.0)])


def glauber_amplitudes(beta: complex, N: int) -> np.ndarray:
    """Unnormalised-by-truncation coherent amplitudes ``e^{-|b|^2/2} b^n / sqrt(n!)``, n < N."""
    n = np.arange(N)
    if beta == 0:
        out = np.zeros(N, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * abs(beta) ** 2 + n * math.log(abs(beta)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag + 1j * n * np.angle(beta))


def coherent_initial_state(pt, trunc, max_deficit: float = MAX_NORM_DEFICIT) -> np.ndarray:
    """``|tau> (x) |beta>`` centred at ``pt``, renormalised after truncation.

    Raises :class:`TruncationTooSmallError` when the truncated Glauber state
    has lost more than ``max_deficit`` of its norm.
    """
    pt = _as_point(pt)
    N = _trunc(trunc).N
    beta = (pt.q2 + 1j * pt.p2) / math.sqrt(2.0)
    field = glauber_amplitudes(beta, N)
    norm2 = float(np.vdot(field, field).real)
    deficit = 1.0 - norm2
    if deficit > max_deficit:
        raise TruncationTooSmallError(
            f"N = {N} keeps only {norm2:.12f} of the coherent-state norm for |beta|^2 = {abs(beta) ** 2:.6g} "
            f"(deficit {deficit:.3e} > {max_deficit:.1e})", deficit=deficit)
    psi = np.kron(spin_amplitudes(pt.q1, pt.p1), field)
    return psi / np.linalg.norm(psi)


def _ops(N):
    a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
    sp = np.array([[0.0, 0.0], [1.0, 0.0]])  # |up><down| in (down, up) order
    sz = np.diag([-1.0, 1.0])
    iN = np.eye(N)
    i2 = np.eye(2)
    return {
        "sigma_plus": np.kron(sp, iN),
        "sigma_minus": np.kron(sp.T, iN),
        "sigma_z": np.kron(sz, iN),
        "a": np.kron(i2, a),
        "a_dag": np.kron(i2, a.T),
        "n": np.kron(i2, a.T @ a),
    }


def expectation(psi: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.vdot(psi, op @ psi))


def expectation_checks(pt, trunc) -> dict:
    """Compare spin and field expectations on the prepared state with their closed forms.

    Returns ``{name: (numeric, closed_form)}`` plus ``"max_error"``.
    """
    pt = _as_point(pt)
    N = _trunc(trunc).N
    psi = coherent_initial_state(pt, N)
    ops = _ops(N)
    r = pt.bloch_r2
    tau = (pt.q1 + 1j * pt.p1) / math.sqrt(2.0 - r)
    beta = (pt.q2 + 1j * pt.p2) / math.sqrt(2.0)
    t2 = abs(tau) ** 2
    closed = {
        "sigma_plus": tau.conjugate() / (1 + t2),
        "sigma_minus": tau / (1 + t2),
        "sigma_z": -(1 - t2) / (1 + t2),
        "a": beta,
        "a_dag": beta.conjugate(),
    }
    report = {k: (expectation(psi, ops[k]), complex(v)) for k, v in closed.items()}
    report["max_error"] = max(abs(a - b) for a, b in report.values())
    return report


def reduced_density_atom(psi: np.ndarray) -> np.ndarray:
    """``rho[s, s'] = sum_n psi(s, n) conj(psi(s', n))``."""
    m = np.asarray(psi).reshape(2, -1)
    return m @ m.conj().T


def linear_entropy(rho: np.ndarray) -> float:
    """``1 - Tr(rho^2)``."""
    rho = np.asarray(rho)
    return float(1.0 - np.real(np.trace(rho @ rho)))


class Spectrum:
    """Eigendecomposition of a Hermitian ``2N x 2N`` Hamiltonian, reused for all times."""

    def __init__(self, H: np.ndarray, params: ModelParams | None = None):
        self.H = np.asarray(H)
        self.params = params
        self.N = self.H.shape[0] // 2
        try:
            self.energies, self.vectors = np.linalg.eigh(self.H)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigendecomposition failed for N = {self.N}: {exc}") from exc

    @classmethod
    def for_model(cls, params: ModelParams, trunc) -> "Spectrum":
        return cls(build_hamiltonian(params, trunc), params)

    def coefficients(self, psi0: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ psi0

    def _blocks(self, psi0, times):
        c = self.coefficients(psi0)
        times = np.asarray(times, dtype=float)
        V = self.vectors
        for s in range(0, len(times), _TIME_CHUNK):
            tt = times[s:s + _TIME_CHUNK]
            theta = np.outer(self.energies, tt)
            cos, sin = np.cos(theta), np.sin(theta)
            # c e^{-i theta} split into contiguous real and imaginary parts;
            # strided views of a complex array would bypass BLAS
            re = c.real[:, None] * cos + c.imag[:, None] * sin
            im = c.imag[:, None] * cos - c.real[:, None] * sin
            if np.iscomplexobj(V):
                yield s, V @ (re + 1j * im)
            else:
                yield s, (V @ re) + 1j * (V @ im)

    def evolve(self, psi0: np.ndarray, times) -> np.ndarray:
        """States ``exp(-iHt) psi0`` as rows of a ``(len(times), 2N)`` array."""
        times = np.asarray(times, dtype=float)
        out = np.empty((len(times), 2 * self.N), dtype=complex)
        for s, A in self._blocks(psi0, times):
            out[s:s + A.shape[1]] = A.T
        # exp(-iH 0) is the identity; return the input bits untouched
        out[times == 0.0] = psi0
        return out

    def entropy_trace(self, psi0: np.ndarray, times) -> np.ndarray:
        """Linear entropy of the atom along the evolution, without storing the states."""
        times = np.asarray(times, dtype=float)
        S = np.empty(len(times))
        N = self.N
        for s, A in self._blocks(psi0, times):
            d, u = A[:N], A[N:]
            rdd = np.einsum("ij,ij->j", d.real, d.real) + np.einsum("ij,ij->j", d.imag, d.imag)
            ruu = np.einsum("ij,ij->j", u.real, u.real) + np.einsum("ij,ij->j", u.imag, u.imag)
            rdu = np.einsum("ij,ij->j", d, u.conj())
            # 1 - Tr rho^2 = 2 det rho for unit trace; the determinant form
            # avoids subtracting two numbers close to 1 when S is small
            det = rdd * ruu - (rdu.real ** 2 + rdu.imag ** 2)
            S[s:s + A.shape[1]] = 2.0 * det / (rdd + ruu) ** 2
        # a density matrix has det >= 0; negatives are rounding
        return np.maximum(S, 0.0)


class SpectrumCache:
    """Thread-safe cache of :class:`Spectrum` keyed by the exact parameter bits and N."""

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._lock = threading.Lock()
        self._data: dict = {}

    @staticmethod
    def key(params: ModelParams, N: int):
        return params.as_array().tobytes(), int(N)

    def get(self, params: ModelParams, trunc) -> Spectrum:
        N = _trunc(trunc).N
        k = self.key(params, N)
        with self._lock:
            sp = self._data.get(k)
        if sp is not None:
            return sp
        sp = Spectrum.for_model(params, N)
        with self._lock:
            if k not in self._data:
                if len(self._data) >= self.maxsize:
                    self._data.pop(next(iter(self._data)))
                self._data[k] = sp
            return self._data[k]

    def clear(self):
        with self._lock:
            self._data.clear()


spectra = SpectrumCache()


def evolve(H: np.ndarray, psi0: np.ndarray, times) -> np.ndarray:
    """``exp(-iHt) psi0`` for each ``t`` in ``times`` from one eigendecomposition of ``H``."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and non-negative")
    return Spectrum(H).evolve(psi0, times)


def time_grid(window=DEFAULT_WINDOW, dt: float = DEFAULT_DT) -> np.ndarray:
    """Uniform grid ``t1, t1 + dt, ..., t2``; ``dt`` is adjusted to divide the window."""
    t1, t2 = map(float, window)
    if not (t2 > t1 >= 0):
        raise ValueError(f"window must satisfy t2 > t1 >= 0, got {window}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    k = max(1, int(round((t2 - t1) / dt)))
    return np.linspace(t1, t2, k + 1)


def entropy_trace(params: ModelParams, pt, trunc, times, cache: SpectrumCache | None = spectra) -> np.ndarray:
    """``S(t)`` for the coherent state centred at ``pt``."""
    psi0 = coherent_initial_state(pt, trunc)
    sp = cache.get(params, trunc) if cache is not None else Spectrum.for_model(params, trunc)
    return sp.entropy_trace(psi0, times)


def time_average(S: np.ndarray, times: np.ndarray) -> float:
    return float(trapezoid(S, times) / (times[-1] - times[0]))


def time_averaged_entropy(params: ModelParams, pt, trunc, window=DEFAULT_WINDOW, dt: float = DEFAULT_DT,
                          cache: SpectrumCache | None = spectra) -> float:
    """Trapezoidal mean of ``S(t)`` over ``window`` sampled every ``dt``."""
    times = time_grid(window, dt)
    return time_average(entropy_trace(params, pt, trunc, times, cache), times)


@dataclass
class TruncationSearch:
    """Outcome of :func:`find_truncation`: the chosen cutoff and every comparison made."""

    N: int
    table: list[tuple[int, float]]  # (N, max_t |S_N(t) - S_2N(t)|), inf if N was too small

    @property
    def trunc(self) -> FockTruncation:
        return FockTruncation(self.N)


def find_truncation(params: ModelParams, pt, window=DEFAULT_WINDOW, dt: float = DEFAULT_DT,
                    eps: float = 1e-3, cap: int = TRUNCATION_CAP, n_start: int = 2,
                    report: bool = False) -> FockTruncation | TruncationSearch:
    """Smallest N with ``max_t |S_N(t) - S_2N(t)| < eps``.

    Doubles N from ``n_start`` until the criterion holds, then bisects between
    the last failing and first passing cutoff.  A cutoff too small for the
    coherent state itself counts as failing.  Raises
    :class:`CapExceededError` if no N up to ``cap`` passes.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    pt = _as_point(pt)
    times = time_grid(window, dt)
    traces: dict[int, np.ndarray | None] = {}
    table: dict[int, float] = {}

    def trace(N):
        if N not in traces:
            try:
                # a private spectrum: the search touches many N that a scan never reuses
                traces[N] = entropy_trace(params, pt, N, times, cache=None)
            except TruncationTooSmallError:
                traces[N] = None
        return traces[N]

    def deviation(N):
        if N not in table:
            a, b = trace(N), trace(2 * N)
            table[N] = math.inf if a is None or b is None else float(np.max(np.abs(a - b)))
        return table[N]

    lo, hi = None, max(1, int(n_start))
    while deviation(hi) >= eps:
        lo = hi
        hi *= 2
        if hi > cap:
            raise CapExceededError(f"no truncation up to N = {cap} met eps = {eps:g}; "
                                   f"last deviation {table[lo]:.3e} at N = {lo}")
    if lo is not None:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if deviation(mid) < eps:
                hi = mid
            else:
                lo = mid
    if report:
        return TruncationSearch(hi, sorted(table.items()))
    return FockTruncation(hi)
