"""
Alternating sums as contour integrals.

    sum_{alpha=0}^{n} (-a)^alpha f(alpha) / alpha!
        = (1 / 2 pi i) oint (pi / sin pi z) (a^z / Gamma(z+1)) f(z) dz

The integrand is evaluated in its reflected form -a^z Gamma(-z) f(z), which
has poles only at the non-negative integers. Every contour segment is
integrated with composite Gauss-Legendre panels; the node count doubles until
successive values agree.
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from scipy.special import loggamma

from src.core.models import ModelParams
from src.errors import DomainError, PoleProximity, QuadratureNonConvergence, TailNotNegligible
from src.settings import settings

logger = logging.getLogger(__name__)

POLE_GUARD = 0.1
DEFAULT_STEP = 0.5
VERTICAL_STEP = 1.0
DEFAULT_HALF_HEIGHT = 0.5
START_DEGREE = 8
MAX_DEGREE = 128
TENSOR_MAX_DEGREE = 32
QUADRATURE_RTOL = 1e-12
QUADRATURE_ATOL = 1e-14
TAIL_TOL = 1e-14
MIN_HEIGHT = 4.0
MAX_HEIGHT = 400.0
BLOCK = 64

Beta = Callable[[List[np.ndarray]], np.ndarray]


class ContourShape(str, Enum):
    HUGGING = 'hugging-rectangle'
    SHIFTED = 'shifted-rectangle'
    VERTICAL = 'vertical-lines'


@dataclass(frozen=True)
class ContourSpec:
    """
    A counterclockwise contour around the poles strictly between the anchors.

    For rectangles half_height is the distance of the horizontal edges from the
    real axis; for vertical lines it is the truncation height (None: chosen
    from the integrand's decay when evaluated).
    """
    shape: ContourShape
    left_anchor: float
    right_anchor: float
    half_height: Optional[float] = DEFAULT_HALF_HEIGHT
    step: float = DEFAULT_STEP

    def __post_init__(self):
        for anchor in (self.left_anchor, self.right_anchor):
            if abs(anchor - round(anchor)) < POLE_GUARD:
                raise PoleProximity(f"contour anchor {anchor} within {POLE_GUARD} of an integer")
        if self.left_anchor >= self.right_anchor:
            raise DomainError(f"left anchor {self.left_anchor} not left of {self.right_anchor}")
        if self.half_height is not None and self.half_height < POLE_GUARD:
            raise PoleProximity(f"half height {self.half_height} below the pole guard {POLE_GUARD}")
        if self.step <= 0:
            raise DomainError(f"quadrature step must be positive, got {self.step}")

    @classmethod
    def hugging(cls, n: int, half_height: float = DEFAULT_HALF_HEIGHT,
                step: float = DEFAULT_STEP) -> 'ContourSpec':
        """Rectangle over [-1/2, n + 1/2] enclosing the poles 0..n."""
        return cls(ContourShape.HUGGING, -0.5, n + 0.5, half_height, step)

    @classmethod
    def shifted(cls, n: int, z0: float, half_height: float = DEFAULT_HALF_HEIGHT,
                step: float = DEFAULT_STEP) -> 'ContourSpec':
        """Rectangle whose left edge sits at -1/2 + floor(z0)."""
        return cls(ContourShape.SHIFTED, -0.5 + math.floor(z0), n + 0.5, half_height, step)

    @classmethod
    def vertical_lines(cls, n: int, z0: float = 0.0, height: Optional[float] = None,
                       step: float = VERTICAL_STEP) -> 'ContourSpec':
        """Lines Re z = -1/2 + floor(z0) (downward) and Re z = n + 1/2 (upward)."""
        return cls(ContourShape.VERTICAL, -0.5 + math.floor(z0), n + 0.5, height, step)

    def enclosed_poles(self) -> List[int]:
        """Poles of the reflected integrand inside the contour."""
        start = max(0, math.ceil(self.left_anchor))
        return list(range(start, math.floor(self.right_anchor) + 1))

    def segments(self) -> List[Tuple[complex, complex]]:
        L, R, h = self.left_anchor, self.right_anchor, self.half_height
        if h is None:
            raise DomainError("segments need a half height; call with a resolved truncation height")
        if self.shape is ContourShape.VERTICAL:
            return [(complex(R, -h), complex(R, h)), (complex(L, h), complex(L, -h))]
        return [
            (complex(L, -h), complex(R, -h)),
            (complex(R, -h), complex(R, h)),
            (complex(R, h), complex(L, h)),
            (complex(L, h), complex(L, -h)),
        ]


def reflected_kernel(z: np.ndarray, a: float) -> np.ndarray:
    """-a^z Gamma(-z) = (pi / sin pi z) a^z / Gamma(z+1), vectorized in complex128."""
    z = np.asarray(z, dtype=complex)
    return -np.exp(z * math.log(a) + loggamma(-z))


def alternating_sum(a, n: int, f: Optional[Callable] = None, prec: Optional[int] = None) -> float:
    """sum_{alpha=0}^{n} (-a)^alpha f(alpha) / alpha!, summed in mpmath."""
    if a < 0 or n < 0:
        raise DomainError(f"alternating sum needs a >= 0 and n >= 0, got a={a}, n={n}")
    with mpmath.workprec(prec or settings.precision_bits):
        total = mpmath.mpf(0)
        term = mpmath.mpf(1)
        for alpha in range(n + 1):
            if alpha:
                term = term * (-mpmath.mpf(a)) / alpha
            weight = 1 if f is None else mpmath.mpf(complex(f(alpha)).real)
            total += term * weight
        return float(total)


def quadrature_nodes(spec: ContourSpec, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes z_k and weights w_k (dz included) of the composite rule on the contour."""
    t, w = np.polynomial.legendre.leggauss(degree)
    nodes, weights = [], []
    for start, end in spec.segments():
        panels = max(1, math.ceil(abs(end - start) / spec.step))
        edges = start + (end - start) * np.arange(panels + 1) / panels
        half = (edges[1:] - edges[:-1]) / 2
        nodes.append(((edges[:-1] + half)[:, None] + half[:, None] * t[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def _check_guard(z: np.ndarray):
    nearest = np.clip(np.round(z.real), 0, None)
    distance = np.abs(z - nearest)
    if distance.min() < POLE_GUARD:
        raise PoleProximity(f"quadrature node within {distance.min():.3g} of a pole")


def _tensor_sum(func, rules) -> Tuple[complex, float]:
    """sum over the tensor grid of func(z) * prod w, blocked over the first axis."""
    s = len(rules)
    shaped = []
    for d, (z, w) in enumerate(rules[1:], start=1):
        shape = [1] * s
        shape[d] = -1
        shaped.append((z.reshape(shape), w.reshape(shape)))

    total = 0j
    scale = 0.0
    z0, w0 = rules[0]
    for start in range(0, len(z0), BLOCK):
        shape = [1] * s
        shape[0] = -1
        zs = [z0[start:start + BLOCK].reshape(shape)] + [z for z, _ in shaped]
        weight = w0[start:start + BLOCK].reshape(shape)
        for _, w in shaped:
            weight = weight * w
        contribution = func(zs) * weight
        total += complex(np.sum(contribution))
        scale += float(np.sum(np.abs(contribution)))
    return total, scale


def integrate(
    func: Callable[[List[np.ndarray]], np.ndarray],
    specs: Sequence[ContourSpec],
    rtol: float = QUADRATURE_RTOL,
    start_degree: int = START_DEGREE,
    max_degree: Optional[int] = None,
) -> complex:
    """
    (1 / 2 pi i)^s times the s-fold contour integral of func.

    Raises:
        QuadratureNonConvergence: if doubling the node count up to max_degree
            never reproduces the previous value
    """
    s = len(specs)
    max_degree = max_degree or (MAX_DEGREE if s == 1 else TENSOR_MAX_DEGREE)
    norm = (2j * math.pi) ** s

    previous = None
    degree = start_degree
    while degree <= max_degree:
        rules = [quadrature_nodes(spec, degree) for spec in specs]
        for z, _ in rules:
            _check_guard(z)
        total, scale = _tensor_sum(func, rules)
        value = total / norm
        if previous is not None:
            tolerance = rtol * abs(value) + QUADRATURE_ATOL * max(1.0, scale / abs(norm))
            if abs(value - previous) <= tolerance:
                logger.debug(f"quadrature converged at degree {degree} (s={s}): {value}")
                return value
        previous = value
        degree *= 2

    logger.error(f"quadrature did not settle by degree {max_degree} (s={s}), last value {previous}")
    raise QuadratureNonConvergence(f"no agreement between successive refinements up to degree {max_degree}")


def contour_identity_rhs(a, n: int, f: Optional[Callable] = None,
                         spec: Optional[ContourSpec] = None) -> float:
    """The contour side of the alternating-sum identity on a hugging rectangle."""
    if a <= 0:
        raise DomainError(f"a^z needs a > 0 on the contour, got {a}")
    spec = spec or ContourSpec.hugging(n)

    def integrand(zs):
        values = reflected_kernel(zs[0], a)
        return values if f is None else values * f(zs[0])

    return integrate(integrand, [spec]).real


def truncation_height(a, spec: ContourSpec, f: Optional[Callable] = None,
                      tol: float = TAIL_TOL) -> float:
    """
    Smallest integer height past which the vertical-line tails are negligible.

    The tail beyond Y is estimated from the observed decay ratio between Y and
    Y + 1 and compared against tol times the largest |integrand| on the lines.
    """
    lines = [spec.left_anchor, spec.right_anchor]

    def magnitude(x, y):
        z = x + 1j * np.asarray(y, dtype=float)
        value = reflected_kernel(z, a)
        if f is not None:
            value = value * f(z)
        return np.abs(value)

    heights = np.arange(0.0, MAX_HEIGHT + 1.0, 0.5)
    Y = MIN_HEIGHT
    while Y <= MAX_HEIGHT:
        scale = max(float(magnitude(x, heights[heights <= Y]).max()) for x in lines)
        tail = 0.0
        for x in lines:
            for sign in (1, -1):
                here = float(magnitude(x, sign * Y))
                beyond = float(magnitude(x, sign * (Y + 1)))
                if here == 0:
                    continue
                if beyond >= here:
                    tail = math.inf
                    break
                tail += here / math.log(here / beyond)
        tail /= 2 * math.pi
        if tail <= tol * max(1.0, scale):
            logger.debug(f"truncation height {Y} for a={a}: tail {tail:.3g}, scale {scale:.3g}")
            return Y
        Y += 1.0

    logger.error(f"vertical-line tails for a={a} stay above {tol} up to height {MAX_HEIGHT}")
    raise TailNotNegligible(f"tail estimate above tolerance at height {MAX_HEIGHT} (a={a})")


def vertical_contour_eval(
    a: Union[float, Sequence[float]],
    n: Union[int, Sequence[int]],
    z0: Union[float, Sequence[float]] = 0.0,
    spec: Optional[Union[ContourSpec, Sequence[ContourSpec]]] = None,
    f: Optional[Callable] = None,
    beta: Optional[Beta] = None,
) -> float:
    """
    The integral over two vertical lines per variable, for s = 1..3.

    With a single variable f multiplies the integrand; with several, beta (a
    function of the list of z arrays) does. The left line sits at
    -1/2 + floor(z0): moving it left crosses no pole, moving it right past k
    integers drops the residues at alpha = 0..k-1.
    """
    a_values = list(np.atleast_1d(a))
    n_values = list(np.atleast_1d(n))
    z0_values = list(np.atleast_1d(z0))
    s = len(a_values)
    if not 1 <= s <= 3:
        raise DomainError(f"vertical-line evaluation supports 1 to 3 variables, got {s}")
    if len(z0_values) == 1 and s > 1:
        z0_values = z0_values * s
    if any(v <= 0 for v in a_values):
        raise DomainError(f"a^z needs a > 0 on the contour, got {a_values}")

    if spec is None:
        specs = [ContourSpec.vertical_lines(int(m), float(z)) for m, z in zip(n_values, z0_values)]
    elif isinstance(spec, ContourSpec):
        specs = [spec] * s
    else:
        specs = list(spec)

    resolved = []
    for d, (value, contour) in enumerate(zip(a_values, specs)):
        if contour.half_height is None:
            factor = f if s == 1 else None
            contour = replace(contour, half_height=truncation_height(value, contour, factor))
        resolved.append(contour)

    def integrand(zs):
        values = reflected_kernel(zs[0], a_values[0])
        for z, value in zip(zs[1:], a_values[1:]):
            values = values * reflected_kernel(z, value)
        if s == 1 and f is not None:
            values = values * f(zs[0])
        if beta is not None:
            values = values * beta(zs)
        return values

    return integrate(integrand, resolved).real


def crossed_residues(a, spec: ContourSpec, n: int, f: Optional[Callable] = None) -> float:
    """Sum of the residues at 0..n that the contour leaves outside."""
    missing = [k for k in range(n + 1) if k not in spec.enclosed_poles()]
    total = 0.0
    for k in missing:
        weight = 1.0 if f is None else complex(f(k)).real
        total += (-a) ** k * weight / math.factorial(k)
    return total


def boxed_sum_via_contour(
    a: Sequence[float],
    m: Sequence[int],
    beta: Optional[Beta] = None,
    step: float = DEFAULT_STEP,
) -> float:
    """
    sum_{alpha <= m} beta(alpha) prod (-a_k)^alpha_k / alpha_k! as an s-fold
    hugging-rectangle integral.
    """
    if len(a) != len(m):
        raise DomainError(f"{len(a)} activities for {len(m)} box limits")
    if any(v <= 0 for v in a):
        raise DomainError(f"a^z needs a > 0 on the contour, got {list(a)}")
    specs = [ContourSpec.hugging(int(limit), step=step) for limit in m]

    def integrand(zs):
        values = reflected_kernel(zs[0], a[0])
        for z, value in zip(zs[1:], a[1:]):
            values = values * reflected_kernel(z, value)
        return values if beta is None else values * beta(zs)

    return integrate(integrand, specs).real


def direct_boxed_sum(a: Sequence[float], m: Sequence[int], beta: Optional[Beta] = None) -> float:
    """The same box sum evaluated term by term."""
    total = 0.0
    for alpha in itertools.product(*(range(limit + 1) for limit in m)):
        term = 1.0
        for value, k in zip(a, alpha):
            term *= (-value) ** k / math.factorial(k)
        if beta is not None:
            point = [np.asarray(complex(k)) for k in alpha]
            term *= complex(beta(point)).real
        total += term
    return total


def integrand_g(z_vector, a_vector, beta=1, guard: float = POLE_GUARD):
    """
    prod_k (-a_k^{z_k} Gamma(-z_k)) times beta, in mpmath.

    Args:
        z_vector: complex points, none within guard of a non-negative integer
        a_vector: positive activities
        beta: a number, or a callable of z_vector

    Raises:
        PoleProximity: if some z_k is within guard of a pole of Gamma(-z)
    """
    value = mpmath.mpc(1)
    for z, a in zip(z_vector, a_vector):
        z = mpmath.mpc(z)
        nearest = max(0, int(mpmath.nint(z.real)))
        if abs(z - nearest) < guard:
            raise PoleProximity(f"z = {z} within {guard} of the pole at {nearest}")
        value *= -mpmath.power(a, z) * mpmath.gamma(-z)
    return value * (beta(z_vector) if callable(beta) else beta)


def integrand_sine_form(z_vector, a_vector, beta=1, guard: float = POLE_GUARD):
    """prod_k (pi / sin pi z_k) a_k^{z_k} / Gamma(z_k + 1) times beta, in mpmath."""
    value = mpmath.mpc(1)
    for z, a in zip(z_vector, a_vector):
        z = mpmath.mpc(z)
        nearest = mpmath.nint(z.real)
        if abs(z - nearest) < guard:
            raise PoleProximity(f"z = {z} within {guard} of the integer {nearest}")
        value *= mpmath.pi / mpmath.sin(mpmath.pi * z) * mpmath.power(a, z) * mpmath.rgamma(z + 1)
    return value * (beta(z_vector) if callable(beta) else beta)


def dressed_beta(params: ModelParams, fixed_weight: int, strides: Sequence[int]) -> Beta:
    """
    z -> beta~(N, w) with w = fixed_weight + sum_k strides_k z_k, continued
    analytically through the principal logarithm.
    """
    N = params.N
    p = float(params.p)
    strides = [int(d) for d in strides]

    def xlogx(x):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(x == 0, 0j, x * np.log(x))

    def beta(zs):
        w = fixed_weight + sum(d * np.asarray(z, dtype=complex) for d, z in zip(strides, zs))
        j = w / N
        Htilde = xlogx(1 - 2 * j) + j - p / 2 * xlogx(1 - 2 * j / p)
        return np.exp(N * Htilde)

    return beta
