"""The reduced k-variable functional of an eigenvalue group.

For an orthonormal eigenbasis e_1..e_k of a group and exponent p > 1, the
functional is

    F(a) = |a|^2 / 2 - (1/(p+1)) * integral |a .  e|^(p+1)

Its nontrivial critical points are what the branch predictor counts and
classifies.  Two interchangeable evaluation backends are provided:

* ``exact-quartic`` (p = 3 only): the integral term is a fully symmetric
  4-index tensor of eigenfunction products, each entry a closed-form
  sine-product integral.  Authoritative for p = 3.
* ``quadrature`` (any p > 1): composite Gauss-Legendre panels per axis,
  aligned to the nodal lines of the highest mode.  General-p fallback and
  the cross-check oracle for the tensor.

Functionals are immutable after construction and their evaluators are pure.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import PatternMismatch, SupercriticalExponentWarning
from .spectrum import DomainSpec, EigenGroup, eigenfunction_eval

_SIGNS4 = [s for s in itertools.product((1, -1), repeat=4)]


def sine_product_zero_coefficient(freqs) -> Fraction:
    """Constant Fourier coefficient of prod_i sin(f_i u), exact.

    Writing each sine as complex exponentials, the mean value over a full
    period is (1/16) * sum over sign vectors s with s . f = 0 of prod(s).
    """
    f = tuple(int(x) for x in freqs)
    if len(f) != 4 or any(x < 1 for x in f):
        raise ValueError("need four positive integer frequencies")
    total = 0
    for s in _SIGNS4:
        if s[0] * f[0] + s[1] * f[1] + s[2] * f[2] + s[3] * f[3] == 0:
            total += s[0] * s[1] * s[2] * s[3]
    return Fraction(total, 16)


def sine_product_integral(freqs, length: float) -> float:
    """integral_0^L of prod_{i=1..4} sin(f_i pi x / L) dx, exact.

    Only the constant term of the product's cosine expansion survives
    integration over [0, L], so the value is L times the exact rational
    coefficient.  Vanishes by parity whenever sum(f_i) is odd.
    """
    return float(sine_product_zero_coefficient(freqs)) * float(length)


@dataclass(frozen=True)
class QuarticTensor:
    """Fully symmetric 4-index array of eigenfunction product integrals."""

    k: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.shape != (self.k,) * 4:
            raise ValueError("entries must have shape (k, k, k, k)")
        object.__setattr__(self, "entries", e)

    @classmethod
    def from_pattern(cls, k: int, alpha: float, beta: float) -> "QuarticTensor":
        """Synthetic tensor with diagonal alpha and pair coefficient beta.

        Entries are alpha on (i,i,i,i), beta on permutations of (i,i,l,l)
        with i != l, zero elsewhere; this is the structure box eigenbases
        with pairwise-distinct mode indices produce.
        """
        T = np.zeros((k,) * 4)
        for i in range(k):
            T[i, i, i, i] = alpha
        for i in range(k):
            for l in range(k):
                if i == l:
                    continue
                for idx in set(itertools.permutations((i, i, l, l))):
                    T[idx] = beta
        return cls(k, T)

    def symmetry_defect(self) -> float:
        """Max absolute deviation under the 24 index permutations."""
        worst = 0.0
        for perm in itertools.permutations(range(4)):
            worst = max(worst, float(np.max(np.abs(
                self.entries - np.transpose(self.entries, perm)))))
        return worst

    def to_json(self, p: float = 3.0) -> str:
        """Serialize as {k, p, entries} with entries in lexicographic
        multi-index order (C order)."""
        payload = {"k": self.k, "p": p, "entries": self.entries.ravel(order="C").tolist()}
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> tuple["QuarticTensor", float]:
        payload = json.loads(text)
        k = int(payload["k"])
        entries = np.asarray(payload["entries"], dtype=float).reshape((k,) * 4)
        return cls(k, entries), float(payload["p"])


def build_quartic_tensor(group: EigenGroup, domain: DomainSpec) -> QuarticTensor:
    """Tensor of integrals of products of four group eigenfunctions.

    Each entry factorizes over axes into 1D sine-product integrals times
    the normalization (2/L_d)^2 per axis, i.e. prod_d 4 c0_d / L_d with
    c0_d the exact zero coefficient.  No sparsity pattern is assumed: every
    entry is computed, because index coincidences across modes can make
    nominally "odd" entries survive.
    """
    k = group.k
    sides = domain.sides
    idx = [m.indices for m in group.modes]
    cache: dict[tuple[int, ...], float] = {}

    def entry(combo):
        key = tuple(sorted(combo))
        if key not in cache:
            val = 1.0
            for d, L in enumerate(sides):
                c0 = sine_product_zero_coefficient([idx[i][d] for i in key])
                if c0 == 0:
                    val = 0.0
                    break
                val *= 4.0 * float(c0) / L
            cache[key] = val
        return cache[key]

    T = np.empty((k,) * 4)
    for combo in itertools.product(range(k), repeat=4):
        T[combo] = entry(combo)
    return QuarticTensor(k, T)


@dataclass(frozen=True)
class RectCoefficients:
    """The two numbers that determine a pattern tensor: alpha = integral of
    e_i^4 (same for all i), beta = integral of e_i^2 e_l^2 (same for all
    i != l, zero for k = 1)."""

    alpha: float
    beta: float


def extract_rect_coefficients(tensor: QuarticTensor, rtol: float = 1e-10) -> RectCoefficients:
    """Verify the two-coefficient pattern and read (alpha, beta) off it.

    Raises :class:`PatternMismatch` when diagonal entries differ, pair
    entries differ, or any odd entry (an index appearing an odd number of
    times) fails to vanish within ``rtol`` relative to alpha.
    """
    k = tensor.k
    T = tensor.entries
    alpha = float(T[(0,) * 4])
    if alpha <= 0:
        raise PatternMismatch("diagonal entry must be positive")
    beta = float(T[0, 0, 1, 1]) if k > 1 else 0.0
    ideal = QuarticTensor.from_pattern(k, alpha, beta).entries
    defect = float(np.max(np.abs(T - ideal)))
    if defect > rtol * max(1.0, alpha):
        raise PatternMismatch(
            f"tensor deviates from (alpha, beta) pattern by {defect:.3e}"
        )
    return RectCoefficients(alpha, beta)


def _gauss_panels(length: float, n_panels: int, nodes: int):
    """Composite Gauss-Legendre nodes/weights on [0, length]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, length, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    xs = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return xs, ws


class ReducedFunctional:
    """Evaluators for the reduced functional, its gradient and Hessian.

    Construct with :meth:`for_group` (the normal path) or
    :meth:`from_tensor` (synthetic pattern tensors, p = 3).  The evaluators
    satisfy F(0) = 0 and F(-a) = F(a) identically.
    """

    def __init__(self, k, p, backend, tensor=None, group=None, domain=None,
                 quad_points=None, quad_weights=None, quad_spec=None):
        self.k = k
        self.p = float(p)
        self.backend = backend
        self.tensor = tensor
        self.group = group
        self.domain = domain
        self._E = quad_points      # (n_quad, k) eigenfunction values
        self._w = quad_weights     # (n_quad,)
        self.quad_spec = quad_spec or {}
        if self.p <= 1:
            raise ValueError("exponent p must exceed 1")
        if backend not in ("exact-quartic", "quadrature"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "exact-quartic" and self.p != 3.0:
            raise ValueError("exact-quartic backend requires p = 3")
        if backend == "exact-quartic" and tensor is None:
            raise ValueError("exact-quartic backend needs a quartic tensor")
        if backend == "quadrature" and (quad_points is None or quad_weights is None):
            raise ValueError("quadrature backend needs nodes and weights")

    @classmethod
    def for_group(cls, group: EigenGroup, domain: DomainSpec, p: float = 3.0,
                  backend: str | None = None, nodes_per_panel: int = 12,
                  panels_per_halfwave: int = 1) -> "ReducedFunctional":
        """Build the functional for a group's eigenbasis.

        ``backend`` defaults to exact-quartic at p = 3 and quadrature
        otherwise.  Quadrature panels per axis cover one half-wavelength of
        the highest mode each (times ``panels_per_halfwave``), so the
        integrand is smooth on every panel for odd integer p and nearly so
        in general.
        """
        p = float(p)
        if domain.dimension == 3 and p > 5.0:
            warnings.warn(
                "p exceeds the critical exponent 5 for dimension 3; the "
                "reduced functional is well defined but PDE verification "
                "will refuse this exponent",
                SupercriticalExponentWarning,
                stacklevel=2,
            )
        if backend is None:
            backend = "exact-quartic" if p == 3.0 else "quadrature"
        tensor = build_quartic_tensor(group, domain) if p == 3.0 else None
        E = w = None
        spec = {}
        if backend == "quadrature":
            sides = domain.sides
            axes = []
            panel_counts = []
            for d, L in enumerate(sides):
                n_half = max(m.indices[d] for m in group.modes)
                n_panels = panels_per_halfwave * n_half
                panel_counts.append(n_panels)
                axes.append(_gauss_panels(L, n_panels, nodes_per_panel))
            grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
            pts = [g.ravel() for g in grids]
            wgrid = np.meshgrid(*[a[1] for a in axes], indexing="ij")
            w = np.ones_like(wgrid[0])
            for g in wgrid:
                w = w * g
            w = w.ravel()
            E = np.column_stack(
                [eigenfunction_eval(m, domain, pts) for m in group.modes]
            )
            spec = {"panel_counts": panel_counts, "nodes_per_panel": nodes_per_panel}
        return cls(group.k, p, backend, tensor=tensor, group=group, domain=domain,
                   quad_points=E, quad_weights=w, quad_spec=spec)

    @classmethod
    def from_tensor(cls, tensor: QuarticTensor, p: float = 3.0) -> "ReducedFunctional":
        if float(p) != 3.0:
            raise ValueError("a quartic tensor only represents p = 3")
        return cls(tensor.k, 3.0, "exact-quartic", tensor=tensor)

    # -- evaluation ------------------------------------------------------

    def _nonlinear_integral(self, a):
        """integral of |a . e|^(p+1)."""
        if self.backend == "exact-quartic":
            return float(np.einsum("ihlm,i,h,l,m->", self.tensor.entries, a, a, a, a))
        W = self._E @ a
        return float(np.sum(self._w * np.abs(W) ** (self.p + 1)))

    def value(self, a) -> float:
        a = np.asarray(a, dtype=float)
        return 0.5 * float(a @ a) - self._nonlinear_integral(a) / (self.p + 1.0)

    def gradient(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self.backend == "exact-quartic":
            cubic = np.einsum("ihlm,h,l,m->i", self.tensor.entries, a, a, a)
            return a - cubic
        W = self._E @ a
        g = self._E.T @ (self._w * np.abs(W) ** (self.p - 1.0) * W)
        return a - g

    def hessian(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        eye = np.eye(self.k)
        if self.backend == "exact-quartic":
            quad = np.einsum("ihlm,l,m->ih", self.tensor.entries, a, a)
            return eye - 3.0 * quad
        W = self._E @ a
        d = self._w * self.p * np.abs(W) ** (self.p - 1.0)
        return eye - (self._E * d[:, None]).T @ self._E

    def gradient_many(self, A, chunk: int = 65536) -> np.ndarray:
        """Gradient at each row of ``A``; vectorized for grid scans."""
        A = np.asarray(A, dtype=float)
        if self.backend == "exact-quartic":
            cubic = np.einsum("ihlm,nh,nl,nm->ni", self.tensor.entries, A, A, A,
                              optimize=True)
            return A - cubic
        out = np.empty_like(A)
        for s in range(0, A.shape[0], chunk):
            B = A[s:s + chunk]
            W = B @ self._E.T
            out[s:s + chunk] = B - (self._w * np.abs(W) ** (self.p - 1.0) * W) @ self._E
        return out

    def mode_scale(self) -> float:
        """Amplitude where the single-mode terms balance: the largest of
        (integral |e_i|^(p+1))^(-1/(p-1)) over the basis.  Used to size
        search boxes and seed radii."""
        scales = []
        for i in range(self.k):
            unit = np.zeros(self.k)
            unit[i] = 1.0
            q = self._nonlinear_integral(unit)
            scales.append(q ** (-1.0 / (self.p - 1.0)))
        return max(scales)
