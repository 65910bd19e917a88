"""Closed-form loss and gradient kernels for the predicate classifier.

Four objectives share one max-shifted log-sum-exp kernel:

* plain softmax cross-entropy,
* frequency-only re-weighting (seesaw-style weights from class counts),
* the category discriminating loss, whose negative-class weights combine the
  frequency ratio mu_ij = n_j/n_i with the confusion-correlation ratio
  phi_ij = s_ij/s_ii from the lattice,
* the entity discriminating loss, a hinge margin over each label's most
  confused neighbor classes, and the combined objective CDL + lambda * EDL.

All gradients are with respect to the logits and are returned in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import ClassFrequencies
from .errors import ConfigurationError, NumericError, ValidationError
from .lattice import PredicateLattice, correlation_ratio

LOSS_KINDS = ("CE", "REWEIGHT", "CDL", "CDL_EDL")


@dataclass
class LossConfig:
    """Hyperparameters of the discriminating losses.

    xi may be set to the sentinel -1.0 to force the strong-correlation branch
    for every pair, which reduces the weight rule to the seesaw form.
    """

    alpha: float = 1.5
    beta: float = 2.0
    xi: float = 0.9
    delta: float = 0.5
    lam: float = 0.1
    top_m: int = 5
    cdl_pc: bool = True
    cdl_rf: bool = True
    edl_pc: bool = True
    edl_bf: bool = True

    def validate(self):
        problems = []
        if not self.alpha > 0:
            problems.append(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            problems.append(f"beta must be > 0, got {self.beta}")
        if not (self.xi == -1.0 or 0.0 <= self.xi <= 1.0):
            problems.append(f"xi must lie in [0, 1] or be the sentinel -1, got {self.xi}")
        if self.delta < 0:
            problems.append(f"delta must be >= 0, got {self.delta}")
        if self.lam < 0:
            problems.append(f"lam must be >= 0, got {self.lam}")
        if self.top_m < 1:
            problems.append(f"top_m must be >= 1, got {self.top_m}")
        if problems:
            raise ValidationError("invalid loss config: " + "; ".join(problems))


@dataclass
class LossOutput:
    """Loss value and its gradient with respect to the logits."""

    value: float
    grad: np.ndarray


def softmax(eta: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted softmax; accepts 1-D or 2-D input."""
    z = eta - np.max(eta, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_finite(eta: np.ndarray):
    if not np.all(np.isfinite(eta)):
        raise NumericError("non-finite logits")


def cdl_weight(i: int, j: int, lattice: PredicateLattice, config: LossConfig) -> float:
    """Negative-class weight w_ij of the category discriminating loss.

    Piecewise in the frequency ratio mu = n_j/n_i and the correlation ratio
    phi = s_ij/s_ii: strong correlation (phi > xi) keeps or amplifies the
    punishment (mu^beta when mu >= 1), weak correlation relaxes it (mu^alpha
    when mu < 1, 1 otherwise). With cdl_pc disabled the correlation test is
    bypassed and the rule reduces to the seesaw weight; with cdl_rf disabled
    the weight is identically 1. w_ii = 1 in every configuration.
    """
    n = np.asarray(lattice.n.counts, dtype=np.float64)
    if not (0 <= i < len(n) and 0 <= j < len(n)):
        raise ValidationError(f"class ids ({i}, {j}) out of range [0, {len(n)})")
    if i == j or not config.cdl_rf:
        return 1.0
    mu = n[j] / n[i]
    if not config.cdl_pc:
        return mu ** config.alpha if mu > 1.0 else 1.0
    phi = correlation_ratio(lattice, i, j)
    if mu >= 1.0:
        return mu ** config.beta if phi > config.xi else 1.0
    return 1.0 if phi > config.xi else mu ** config.alpha


def cdl_weight_matrix(
    freqs: ClassFrequencies, config: LossConfig, lattice: PredicateLattice | None = None
) -> np.ndarray:
    """Full C x C weight matrix; row i holds the weights used for label i."""
    n = np.asarray(freqs.counts, dtype=np.float64)
    c = len(n)
    if not config.cdl_rf:
        return np.ones((c, c))
    freqs.require_all_positive()
    mu = n[None, :] / n[:, None]
    if not config.cdl_pc:
        w = np.where(mu > 1.0, mu ** config.alpha, 1.0)
    else:
        if lattice is None:
            raise ConfigurationError("correlation-aware weights require a lattice")
        s = lattice.s
        diag = np.diag(s)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = s / diag
        # s_ij = 0 -> 0; s_ij > 0 with s_ii = 0 -> +inf sentinel (strong).
        phi = np.where(s == 0.0, 0.0, ratio)
        strong = phi > config.xi
        w = np.where(
            mu >= 1.0,
            np.where(strong, mu ** config.beta, 1.0),
            np.where(strong, 1.0, mu ** config.alpha),
        )
    np.fill_diagonal(w, 1.0)
    return w


class CrossEntropyLoss:
    """Plain softmax cross-entropy; the unit-weight case of the CDL kernel."""

    requires_lattice = False

    def batch(self, eta: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _weighted_ce_batch(eta, labels, None)

    def single(self, eta: np.ndarray, label: int) -> LossOutput:
        return _single_from_batch(self, eta, label)


class CategoryDiscriminatingLoss:
    """Re-weighted softmax cross-entropy with a precomputed weight matrix."""

    def __init__(
        self,
        freqs: ClassFrequencies,
        config: LossConfig,
        lattice: PredicateLattice | None = None,
    ):
        config.validate()
        self.config = config
        weights = cdl_weight_matrix(freqs, config, lattice)
        # The kernel consumes log-weights directly, which doubles as the
        # log-space guard against mu**beta overflowing for extreme ratios.
        with np.errstate(divide="ignore"):
            self.log_w = np.log(weights)

    def batch(self, eta, labels):
        return _weighted_ce_batch(eta, labels, self.log_w)

    def single(self, eta, label):
        return _single_from_batch(self, eta, label)


class EntityDiscriminatingLoss:
    """Hinge margin over each label's most confused neighbors.

    value = mean_{j in V_i} max(0, phi_j - phi_i + delta) * n_j/n_i with
    phi = softmax(eta); the hinge sub-gradient at the kink is 0, so the loss
    and its gradient vanish exactly once every margin is met.
    """

    def __init__(
        self,
        freqs: ClassFrequencies,
        config: LossConfig,
        lattice: PredicateLattice | None = None,
    ):
        config.validate()
        self.config = config
        n = np.asarray(freqs.counts, dtype=np.float64)
        c = len(n)
        if config.edl_pc:
            if lattice is None:
                raise ConfigurationError("neighbor sets require a lattice when edl_pc is enabled")
            neighbors = lattice.neighbors
        else:
            neighbors = [np.delete(np.arange(c), i) for i in range(c)]
        if any(len(v) == 0 for v in neighbors):
            raise ConfigurationError("empty neighbor set; need at least two classes")
        m = len(neighbors[0])
        if any(len(v) != m for v in neighbors):
            raise ConfigurationError("neighbor sets must share a common size")
        self.neighbors = np.stack([np.asarray(v, dtype=np.int64) for v in neighbors])
        if config.edl_bf:
            freqs.require_all_positive()
            self.balance = n[self.neighbors] / n[:, None]
        else:
            self.balance = np.ones_like(self.neighbors, dtype=np.float64)

    def batch(self, eta, labels):
        _check_finite(eta)
        eta = np.atleast_2d(np.asarray(eta, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.int64)
        b = eta.shape[0]
        rows = np.arange(b)
        phi = softmax(eta)
        nbr = self.neighbors[labels]                     # (B, M)
        bf = self.balance[labels]                        # (B, M)
        m = nbr.shape[1]
        phi_nbr = np.take_along_axis(phi, nbr, axis=1)
        phi_lab = phi[rows, labels][:, None]
        margin = phi_nbr - phi_lab + self.config.delta
        active = margin > 0.0
        coef = np.where(active, bf, 0.0) / m
        values = (np.where(active, margin, 0.0) * bf).sum(axis=1) / m
        g_phi = np.zeros_like(phi)
        np.add.at(g_phi, (np.repeat(rows, m), nbr.ravel()), coef.ravel())
        g_phi[rows, labels] -= coef.sum(axis=1)
        inner = (g_phi * phi).sum(axis=1, keepdims=True)
        grads = phi * (g_phi - inner)
        return values, grads

    def single(self, eta, label):
        return _single_from_batch(self, eta, label)


class CombinedLoss:
    """CDL plus lambda times EDL, combined per sample."""

    def __init__(self, cdl: CategoryDiscriminatingLoss, edl: EntityDiscriminatingLoss, lam: float):
        self.cdl = cdl
        self.edl = edl
        self.lam = lam

    def batch(self, eta, labels):
        v1, g1 = self.cdl.batch(eta, labels)
        v2, g2 = self.edl.batch(eta, labels)
        return v1 + self.lam * v2, g1 + self.lam * g2

    def single(self, eta, label):
        return _single_from_batch(self, eta, label)


def _weighted_ce_batch(eta, labels, log_w):
    """Shared kernel: value = lse(eta + log w_row) - eta_label, softmax grad."""
    _check_finite(eta)
    eta = np.atleast_2d(np.asarray(eta, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(eta.shape[0])
    z = eta if log_w is None else eta + log_w[labels]
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    denom = e.sum(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(denom[:, 0])
    values = lse - eta[rows, labels]
    grads = e / denom
    grads[rows, labels] -= 1.0
    return values, grads


def _single_from_batch(loss, eta, label) -> LossOutput:
    eta = np.asarray(eta, dtype=np.float64)
    if eta.ndim != 1:
        raise ValidationError(f"expected a 1-D logit vector, got shape {eta.shape}")
    if not 0 <= label < eta.shape[0]:
        raise ValidationError(f"label {label} out of range [0, {eta.shape[0]})")
    values, grads = loss.batch(eta[None, :], np.array([label]))
    return LossOutput(float(values[0]), grads[0])


def ce_loss_grad(eta, label) -> LossOutput:
    """Plain softmax cross-entropy loss and logit gradient."""
    return CrossEntropyLoss().single(eta, label)


def cdl_loss_grad(eta, label, lattice: PredicateLattice, config: LossConfig) -> LossOutput:
    """Category discriminating loss and logit gradient for one sample."""
    return CategoryDiscriminatingLoss(lattice.n, config, lattice).single(eta, label)


def edl_loss_grad(eta, label, lattice: PredicateLattice, config: LossConfig) -> LossOutput:
    """Entity discriminating loss and logit gradient for one sample."""
    return EntityDiscriminatingLoss(lattice.n, config, lattice).single(eta, label)


def fgpl_loss_grad(eta, label, lattice: PredicateLattice, config: LossConfig) -> LossOutput:
    """Combined objective CDL + lambda * EDL for one sample."""
    cdl = CategoryDiscriminatingLoss(lattice.n, config, lattice)
    edl = EntityDiscriminatingLoss(lattice.n, config, lattice)
    return CombinedLoss(cdl, edl, config.lam).single(eta, label)


def make_loss(
    kind: str,
    config: LossConfig,
    freqs: ClassFrequencies,
    lattice: PredicateLattice | None = None,
):
    """Build the loss evaluator for a training run.

    CE needs nothing extra, REWEIGHT needs class frequencies only, CDL and
    CDL_EDL additionally need the lattice (when their correlation switches
    are enabled).
    """
    kind = kind.upper()
    if kind not in LOSS_KINDS:
        raise ConfigurationError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    if kind == "CE":
        return CrossEntropyLoss()
    if kind == "REWEIGHT":
        return CategoryDiscriminatingLoss(freqs, replace(config, cdl_pc=False))
    if kind in ("CDL", "CDL_EDL") and lattice is None and (config.cdl_pc or config.edl_pc):
        raise ConfigurationError(f"loss kind {kind} requires a lattice")
    cdl = CategoryDiscriminatingLoss(freqs, config, lattice)
    if kind == "CDL":
        return cdl
    edl = EntityDiscriminatingLoss(freqs, config, lattice)
    return CombinedLoss(cdl, edl, config.lam)
