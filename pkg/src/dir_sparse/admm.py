"""Proximal ADMM engine for the weighted BPDN subproblem.

Solves min ||w o x||_1 s.t. ||A_k x - b_w|| <= sqrt(sigma_k) by splitting
the residual into an auxiliary ball-constrained variable.  The x update is
a proximal-linearized step (soft thresholding), the u update a Euclidean
ball projection, and the multiplier update a scaled residual step.  All
products with the scaled matrix are applied implicitly.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import InexactCertificate, SubproblemData, register_engine, retract
from .linalg import project_l2_ball, soft_threshold


@dataclass(frozen=True)
class AdmmConfig:
    """Engine parameters.

    The dual step factor gamma must stay below (1 + sqrt(5)) / 2.  The
    penalty beta and the proximal coefficient are not free parameters:
    they are recomputed for every subproblem as beta = Lbar**-0.5 and
    prox = Lbar * beta from the scaled Gram bound Lbar, which keeps the
    proximal term positive semidefinite.
    """

    gamma: float = 0.99 * (1.0 + math.sqrt(5.0)) / 2.0
    max_inner: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.gamma < (1.0 + math.sqrt(5.0)) / 2.0:
            raise ValueError("gamma must lie in (0, (1+sqrt(5))/2)")


@dataclass
class AdmmState:
    """Primal pair and multiplier carried across warm-started solves."""

    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    iteration: int = 0


def _scaling(sub: SubproblemData):
    """Per-subproblem constants (Lbar, beta, prox coefficient)."""
    L_bar = max(sub.gram_bound(), np.finfo(float).tiny)
    beta = L_bar ** -0.5
    return L_bar, beta, L_bar * beta


def _advance(sub, x, Akx, u, lam, L_bar, beta, gamma):
    """One ADMM sweep given the cached product Akx = A_k x."""
    g = sub.rmatvec(Akx - sub.b_w - u - lam / beta)
    x_new = soft_threshold(x - g / L_bar, sub.w / (beta * L_bar))
    Akx_new = sub.matvec(x_new)
    z = Akx_new - sub.b_w - lam / beta
    u_new = project_l2_ball(z, sub.sigma_bar)
    r = Akx_new - sub.b_w - u_new
    lam_new = lam - gamma * beta * r
    return x_new, Akx_new, z, u_new, lam_new, r


def admm_step(state: AdmmState, sub: SubproblemData, cfg: AdmmConfig) -> AdmmState:
    """Apply one ADMM sweep to ``state`` and return the advanced state."""
    L_bar, beta, _ = _scaling(sub)
    Akx = sub.matvec(state.x)
    x_new, _, _, u_new, lam_new, _ = _advance(
        sub, state.x, Akx, state.u, state.lam, L_bar, beta, cfg.gamma)
    return AdmmState(x=x_new, u=u_new, lam=lam_new, iteration=state.iteration + 1)


def _ball_multiplier(z: np.ndarray, sigma_bar: float, beta: float) -> float:
    """Exact KKT multiplier of the u-update projection.

    The normal-cone element produced by projecting z onto the ball of
    radius sigma_bar equals beta * (||z|| - sigma_bar) / sigma_bar times
    the projected point; zero when z is interior.
    """
    nz = float(np.linalg.norm(z))
    if nz <= sigma_bar:
        return 0.0
    return beta * (nz - sigma_bar) / sigma_bar


def admm_solve(sub: SubproblemData, warm: AdmmState | None = None,
               cfg: AdmmConfig | None = None):
    """Iterate ADMM until the subproblem certificate is accepted.

    Acceptance requires the optimality surrogate and the coupling residual
    to drop to eps_k and the retracted iterate to satisfy the controlled
    weighted-l1 increase; these absolute bounds imply the looser relative
    thresholds min(eps_bar, tau_k * scale) as well, since eps_k <= tau_k
    and eps_k <= eps_bar = min(sigma_k, sqrt(sigma_k)).

    Returns ``(certificate, state, info)`` where ``info`` carries the
    iteration count, the acceptance flag and the trajectory minimum of the
    optimality surrogate.  On hitting ``max_inner`` the certificate of the
    last iterate is returned with ``info["ok"] = False``.
    """
    cfg = cfg or AdmmConfig()
    n = sub.w.shape[0]
    m = sub.b_w.shape[0]
    if warm is None:
        state = AdmmState(x=np.zeros(n), u=np.zeros(m), lam=np.zeros(m))
    else:
        state = AdmmState(x=warm.x.copy(), u=warm.u.copy(), lam=warm.lam.copy(),
                          iteration=warm.iteration)

    L_bar, beta, lam_prox = _scaling(sub)
    x, u, lam = state.x, state.u, state.lam
    Akx = sub.matvec(x)
    eps_k = sub.eps_k
    best_kkt = math.inf
    best_kkt_iter = -1
    descent_ok = False
    kkt = coupling = math.inf
    z = Akx - sub.b_w
    it = 0

    for it in range(1, cfg.max_inner + 1):
        x_new, Akx_new, z, u_new, lam_new, r = _advance(
            sub, x, Akx, u, lam, L_bar, beta, cfg.gamma)

        # Optimality surrogate: the subgradient element produced by the
        # x/u updates, beta * A_k^T (A_k dx - du) - prox * dx.
        dx = x_new - x
        s = beta * sub.rmatvec((Akx_new - Akx) - (u_new - u)) - lam_prox * dx
        kkt = float(np.linalg.norm(s))
        coupling = float(np.linalg.norm(r))
        if kkt < best_kkt:
            best_kkt = kkt
            best_kkt_iter = it

        x, Akx, u, lam = x_new, Akx_new, u_new, lam_new

        if kkt <= eps_k and coupling <= eps_k:
            pulled = retract(sub, x)
            descent_ok = bool(
                np.abs(sub.w * pulled).sum() <= sub.ref_objective + sub.mu_k)
            if descent_ok:
                break
    else:
        pulled = retract(sub, x)
        descent_ok = bool(
            np.abs(sub.w * pulled).sum() <= sub.ref_objective + sub.mu_k)

    ok = kkt <= eps_k and coupling <= eps_k and descent_ok
    cert = InexactCertificate(
        x_tilde=x, u_tilde=u,
        multiplier=_ball_multiplier(z, sub.sigma_bar, beta),
        kkt_residual=kkt, coupling_residual=coupling, descent_ok=descent_ok)
    out_state = AdmmState(x=x, u=u, lam=lam, iteration=state.iteration + it)
    info = {"iterations": it, "ok": ok,
            "best_kkt": best_kkt, "best_kkt_iter": best_kkt_iter}
    return cert, out_state, info


class AdmmEngine:
    """Engine adapter used by the outer loop."""

    certified = True

    def __init__(self, cfg: AdmmConfig | None = None):
        self.cfg = cfg or AdmmConfig()

    def solve(self, sub: SubproblemData, warm):
        cert, state, info = admm_solve(sub, warm, self.cfg)
        return cert, state, info["iterations"], info["ok"]


def _make_admm_engine(config) -> AdmmEngine:
    return AdmmEngine(getattr(config, "admm", None))


register_engine("admm", _make_admm_engine)
