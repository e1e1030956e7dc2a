"""
Tight families of Poisson structures over a product chart M x B.

A family is a bigraded element ``sigma = sigma0 + sigma1 + sigma2`` where
``sigma_i`` is an i-form on B with values in (2 - i)-vectors on M, together
with a closed 3-form ``chi`` on B. It is tight when

    d_B sigma + 1/2 [sigma, sigma] = chi

with the Schouten bracket taken fibrewise. The four bidegree components of
the left side minus ``chi`` are: (0,3) Poisson in the fibres, (1,2) parallel
structure, (2,1) Hamiltonian curvature and (3,0) ``d sigma2 + [sigma1, sigma2] = chi``.

As a Dirac structure on M x B the family is the graph of the skew form
``S = sigma0 + sigma1 - sigma2`` on ``T*M + TB``; ``family_tau_beta`` acts on
that graph and reads the family back.
"""
import logging
from dataclasses import dataclass

from sympy.polys.domains import QQ, QQ_I

from .algebra import (
    BiGraded, Chart, DiffForm, Multivector, base_differential, de_rham_d,
    form_matrix, formal_inverse, lift, matmul, poincare_homotopy,
    project, schouten_bracket, transplant,
)
from .courant import TwistData, check_twisted_poisson
from .exceptions import ChartError, FamilyError, GradeError, NotInvertibleError
from .expressions import as_kind

logger = logging.getLogger(__name__)

SIGMA_BIDEGREES = ((0, 2), (1, 1), (2, 0))
DEFECT_BIDEGREES = ((0, 3), (1, 2), (2, 1), (3, 0))
BASE_SUFFIX = '_b'


def half(field):
    return field * QQ_I.convert(QQ(1, 2))


def split_bidegrees(field, bidegrees):
    """Components of ``field`` keyed by ``(p, q)`` for every requested bidegree."""
    return {bidegree: field.component(*bidegree) for bidegree in bidegrees}


def bigraded(chart, field):
    """Re-read a product-chart field as a BiGraded element."""
    try:
        return BiGraded(chart, field.terms, field.order)
    except (GradeError, ChartError) as exc:
        raise FamilyError(f"{field} is not a form on the base with fibre multivector values", witness=str(field)) from exc


def _check_sigma(sigma):
    for forms, vectors in sigma.terms:
        if (len(forms), len(vectors)) not in SIGMA_BIDEGREES:
            raise FamilyError(
                f"Component of bidegree {(len(forms), len(vectors))} in a degree-2 family",
                witness=str(sigma.component(len(forms), len(vectors))),
            )


def base_pullback(chi, chart):
    """Check that ``chi`` (on the product chart) comes from the base and return it."""
    chi = lift(chi, chart) if chi.chart != chart else chi
    fibre = set(chart.fibre_indices)
    for (forms, _), coeff in chi.terms.items():
        if set(forms) & fibre:
            raise FamilyError("Twist has components along the fibre", witness=str(chi))
        for monom in coeff.itermonoms():
            if any(monom[i] for i in fibre):
                raise FamilyError("Twist depends on fibre coordinates", witness=str(chi))
    return chi


@dataclass(frozen=True)
class TightFamily:
    """
    A degree-2 bigraded element with its twist, both on the product chart.

    ``chi`` is the twisting 3-form on M x B; for the families of the
    Maurer-Cartan equation it is pulled back from B.
    """

    sigma: BiGraded
    chi: DiffForm

    def __post_init__(self):
        chart = self.sigma.chart
        if not chart.is_product:
            raise FamilyError("Families live on product charts")
        sigma = bigraded(chart, self.sigma)
        _check_sigma(sigma)
        chi = lift(as_kind(self.chi, DiffForm), chart) if self.chi.chart != chart else as_kind(self.chi, DiffForm)
        if not chi.is_homogeneous(3, 0):
            raise FamilyError(f"Twist {chi} is not a 3-form", witness=str(chi))
        if de_rham_d(chi):
            raise FamilyError("Twist is not closed", witness=str(de_rham_d(chi)))
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'chi', chi)

    @classmethod
    def from_components(cls, fibre, base, sigma0=None, sigma1=None, sigma2=None, chi=None, order=None):
        """Assemble a family from fields on the product chart or on M / B."""
        chart = Chart.product(fibre, base)
        total = BiGraded.zero(chart, order)
        for part in (sigma0, sigma1, sigma2):
            if part is not None:
                total = total + lift(part, chart)
        if chi is None:
            chi = DiffForm.zero(chart, total.order)
        return cls(bigraded(chart, total), lift(chi, chart))

    @property
    def chart(self):
        return self.sigma.chart

    @property
    def fibre(self):
        return self.chart.fibre

    @property
    def base(self):
        return self.chart.base

    @property
    def order(self):
        return min(self.sigma.order, self.chi.order)

    @property
    def sigma0(self):
        return self.sigma.component(0, 2)

    @property
    def sigma1(self):
        return self.sigma.component(1, 1)

    @property
    def sigma2(self):
        return self.sigma.component(2, 0)

    def is_formal(self):
        """sigma0 and sigma1 are O(h)."""
        return self.sigma0.is_formal() and self.sigma1.is_formal()

    def defect(self):
        return mc_defect(self.sigma, self.chi)

    def is_tight(self):
        return self.defect().is_zero()

    def base_twist(self):
        """chi as a 3-form on B."""
        return project(base_pullback(self.chi, self.chart), self.base)

    def connection(self):
        """sigma1 = sum_a dt_a ^ X_a, as {base index: fibre vector field X_a}."""
        chart = self.chart
        fields = {}
        for ((a,), vectors), coeff in self.sigma1.terms.items():
            fields.setdefault(a, {})[((), vectors)] = coeff
        return {a: Multivector(chart, terms, self.order) for a, terms in sorted(fields.items())}

    def curvature_form(self):
        """sigma2 = sum_{a<b} g_ab dt_a ^ dt_b as {(a, b): g_ab}."""
        return {forms: coeff for (forms, _), coeff in sorted(self.sigma2.terms.items())}


@dataclass(frozen=True)
class InnerParam:
    """A degree-1 bigraded element: a fibre vector field (O(h)) plus a 1-form on B."""

    alpha: BiGraded

    def __post_init__(self):
        alpha = bigraded(self.alpha.chart, self.alpha)
        for forms, vectors in alpha.terms:
            if (len(forms), len(vectors)) not in ((0, 1), (1, 0)):
                raise FamilyError(f"Inner parameter has a component of bidegree {(len(forms), len(vectors))}")
        if not alpha.component(0, 1).is_formal():
            raise FamilyError(
                "The fibre vector field of an inner parameter must be O(h)",
                witness=str(alpha.component(0, 1)),
            )
        object.__setattr__(self, 'alpha', alpha)

    @classmethod
    def build(cls, chart, vector=None, form=None, order=None):
        total = BiGraded.zero(chart, order)
        for part in (vector, form):
            if part is not None:
                total = total + lift(part, chart)
        return cls(bigraded(chart, total))


def mc_defect(sigma, chi):
    """d_B sigma + 1/2 [sigma, sigma] - chi; zero exactly when the family is tight."""
    chart = sigma.chart
    _check_sigma(sigma)
    chi = base_pullback(as_kind(chi, DiffForm), chart)
    result = base_differential(sigma) + half(schouten_bracket(sigma, sigma)) - chi
    defect = bigraded(chart, result)
    logger.debug(f"Maurer-Cartan defect components: {defect.bidegrees()}")
    return defect


def linearized_defect(sigma, variation):
    """Derivative of the Maurer-Cartan defect at sigma along ``variation``."""
    return bigraded(sigma.chart, base_differential(variation) + schouten_bracket(sigma, variation))


def outer_transform(family, beta):
    """sigma -> sigma + beta at bidegree (2,0), chi -> chi + d beta."""
    chart = family.chart
    beta = lift(as_kind(beta, DiffForm), chart)
    if not beta.is_homogeneous(2, 0):
        raise GradeError(f"{beta} is not a 2-form")
    base_pullback(beta, chart)
    sigma = bigraded(chart, family.sigma + beta)
    return TightFamily(sigma, family.chi + de_rham_d(beta))


def inner_transform_infinitesimal(family, alpha):
    """The infinitesimal variation d alpha + [alpha, sigma]."""
    if not isinstance(alpha, InnerParam):
        alpha = InnerParam(alpha)
    variation = base_differential(alpha.alpha) + schouten_bracket(alpha.alpha, family.sigma)
    return bigraded(family.chart, variation)


def exact_outer_as_inner(family, alpha):
    """
    Inner parameter reproducing the outer step by d(alpha) for a 1-form alpha on B.

    The parameter is alpha itself at bidegree (1,0); its bracket with sigma
    vanishes because alpha does not depend on the fibre.
    """
    chart = family.chart
    alpha = lift(as_kind(alpha, DiffForm), chart)
    base_pullback_1form(alpha, chart)
    param = InnerParam(bigraded(chart, alpha))
    variation = inner_transform_infinitesimal(family, param)
    if variation != bigraded(chart, de_rham_d(alpha)):
        raise FamilyError("Inner variation differs from the exact outer step", witness=str(variation))
    return param


def base_pullback_1form(alpha, chart):
    fibre = set(chart.fibre_indices)
    for (forms, vectors), coeff in alpha.terms.items():
        if vectors or len(forms) != 1 or set(forms) & fibre:
            raise FamilyError("Expected a 1-form on the base", witness=str(alpha))
        for monom in coeff.itermonoms():
            if any(monom[i] for i in fibre):
                raise FamilyError("1-form depends on fibre coordinates", witness=str(alpha))


# ---------------------------------------------------------------------------
# Gauge action on the Dirac encoding
# ---------------------------------------------------------------------------

def _blocks(matrix, rows, cols):
    return [[matrix[r][c] for c in cols] for r in rows]


def _add(a, b, sign=1):
    return [[x + y if sign > 0 else x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def _neg(a):
    return [[-x for x in row] for row in a]


def _transpose(a, rows, cols, zero):
    if not a:
        return [[zero] * rows for _ in range(cols)]
    return [list(column) for column in zip(*a)]


def graph_blocks(sigma):
    """
    Block matrices of S = sigma0 + sigma1 - sigma2 on T*M + TB.

    G11 (M x M) holds sigma0, G21 (B x M) the sigma1 coefficients of dt_a ^ d_j,
    G12 = -G21^T and G22 = -g for sigma2 = sum g_ab dt_a ^ dt_b.
    """
    chart = sigma.chart
    zero = chart.ring.zero
    m_idx, b_idx = chart.fibre_indices, chart.base_indices
    m, k = len(m_idx), len(b_idx)
    g11 = [[zero] * m for _ in range(m)]
    g21 = [[zero] * m for _ in range(k)]
    g22 = [[zero] * k for _ in range(k)]
    for (forms, vectors), coeff in sigma.terms.items():
        if not forms:
            i, j = vectors
            g11[i][j], g11[j][i] = coeff, -coeff
        elif len(forms) == 1:
            a, j = forms[0] - m, vectors[0]
            g21[a][j] = coeff
        else:
            a, b = forms[0] - m, forms[1] - m
            g22[a][b], g22[b][a] = -coeff, coeff
    g12 = _neg(_transpose(g21, k, m, zero))
    return g11, g12, g21, g22


def sigma_from_blocks(chart, g11, g21, g22, order):
    m = len(chart.fibre_indices)
    k = len(chart.base_indices)
    terms = {}
    for i in range(m):
        for j in range(i + 1, m):
            if g11[i][j]:
                terms[((), (i, j))] = g11[i][j]
    for a in range(k):
        for j in range(m):
            if g21[a][j]:
                terms[((m + a,), (j,))] = g21[a][j]
    for a in range(k):
        for b in range(a + 1, k):
            if g22[a][b]:
                terms[((m + a, m + b), ())] = -g22[a][b]
    return BiGraded(chart, terms, order)


def family_tau_beta(family, beta, psi=None):
    """
    Gauge transform the Dirac structure of a family by a 2-form on M x B.

    ``family`` is a TightFamily, or a BiGraded sigma together with the
    twist ``psi``. Returns the transformed family with twist psi + d beta.
    """
    if isinstance(family, TightFamily):
        sigma, psi = family.sigma, family.chi
    else:
        sigma = family
        if psi is None:
            psi = DiffForm.zero(sigma.chart, sigma.order)
    chart = sigma.chart
    beta = lift(as_kind(beta, DiffForm), chart) if beta.chart != chart else as_kind(beta, DiffForm)
    if not beta.is_homogeneous(2, 0):
        raise GradeError(f"{beta} is not a 2-form")
    if not (sigma.component(0, 2).is_formal() and sigma.component(1, 1).is_formal()):
        raise FamilyError("Gauge action needs a formal family (sigma0, sigma1 = O(h))")
    order = min(sigma.order, beta.order)
    h, ring = chart.h, chart.ring
    m_idx, b_idx = chart.fibre_indices, chart.base_indices
    m = len(m_idx)
    g11, g12, g21, g22 = graph_blocks(sigma)
    full = form_matrix(beta)
    q_mm = _blocks(full, m_idx, m_idx)
    q_mb = _blocks(full, m_idx, b_idx)
    q_bm = _blocks(full, b_idx, m_idx)
    q_bb = _blocks(full, b_idx, b_idx)
    identity = [[ring.one if i == j else ring.zero for j in range(m)] for i in range(m)]
    try:
        r = formal_inverse(_add(identity, matmul(g11, q_mm, h, order), -1), h, order)
    except NotInvertibleError as exc:
        raise FamilyError(
            "Gauge transformed graph is not transversal at bidegree (0,2)", witness=exc.witness,
        ) from exc
    kappa = _add(matmul(g21, q_mm, h, order), q_bm)
    new11 = matmul(r, g11, h, order)
    shifted12 = _add(g12, matmul(g11, q_mb, h, order), -1)
    new21 = _add(matmul(kappa, new11, h, order), g21)
    new22 = _add(
        _add(matmul(kappa, matmul(r, shifted12, h, order), h, order), g22),
        _add(matmul(g21, q_mb, h, order), q_bb),
        -1,
    )
    result = sigma_from_blocks(chart, new11, new21, new22, order)
    twist = (psi + de_rham_d(beta)).with_order(order)
    logger.info(f"Gauge transformed family on {chart} at order {order}")
    return TightFamily(result, twist)


def constant_family_from_twisted(pi, tw, chart=None, center=None):
    """
    Turn a phi-twisted Poisson bivector on M into a phi-tight family over B = M.

    The constant family (pi, 0, 0) is p_M*phi-tight; the 2-form
    beta = K(p_B*phi - p_M*phi) moves its twist to p_B*phi.
    """
    fibre = pi.chart
    if not isinstance(tw, TwistData):
        tw = TwistData(tw)
    report = check_twisted_poisson(pi, tw)
    if not report.passed:
        raise FamilyError("Bivector is not twisted Poisson", witness=report.get('twisted-poisson').residual)
    if chart is None:
        chart = Chart.product(fibre, fibre.renamed(BASE_SUFFIX))
    if chart.fibre.coordinates != fibre.coordinates or len(chart.base_indices) != fibre.dimension:
        raise FamilyError(f"{chart} is not M x M for {fibre}")
    beta = twist_primitive(tw.phi, chart, center)
    order = min(pi.order, tw.phi.order)
    sigma = bigraded(chart, lift(pi, chart))
    family = family_tau_beta(sigma, beta, psi=lift(tw.phi, chart).with_order(order))
    defect = family.defect()
    if not defect.is_zero():
        witness = {f"{p}-{q}": str(defect.component(p, q)) for p, q in defect.bidegrees()}
        raise FamilyError("Constant family is not tight", witness=witness)
    logger.info(f"Constant family from twisted bivector on {fibre}: beta = {beta}")
    return family


def twist_primitive(phi, chart, center=None):
    """beta = K(p_B*phi - p_M*phi) on M x B with K the homotopy about a diagonal point."""
    fibre = chart.fibre
    if center is None:
        center = fibre.base_point + fibre.base_point
    phi_m = lift(phi, chart)
    phi_b = lift(transplant(phi, chart.base), chart)
    beta = poincare_homotopy(as_kind(phi_b - phi_m, DiffForm), center)
    return as_kind(beta, DiffForm)

