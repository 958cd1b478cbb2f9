"""Soliton modulation: decomposition, drift/martingale systems, tracking.

A field u is decomposed as

    u(. + x) = phi_c + eps * eta,

with (c, x) fixed by the two orthogonality conditions
(eta, phi_{c0}) = (eta, dx phi_{c0}) = 0, solved by a damped-free Newton
iteration on the pairing residuals.  From a decomposed state the 2x2
modulation system is assembled: the Jacobian A, the drift right-hand side G
(giving the dt rates y, a of the center/speed equations) and the martingale
representers z, b (the fields whose pairings with the noise modes drive
dx and dc).

Everything here is ensemble-batched: ``u`` may be (N,) or (paths, N), with
per-path (c, x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionFailure
from .grid import (
    Field,
    GridSpec,
    deriv_values,
    inner_values,
    norm_h1,
    norm_l2,
    translate_values,
)
from .noise import KernelSpec, smoother_adjoint_values
from .soliton import (
    LinearizedOperator,
    apply_L_values,
    dc2phi_b,
    dcphi_b,
    dxphi_b,
    phi_b,
    soliton_dx_values,
    soliton_values,
)


@dataclass
class ModulationState:
    """Decomposition of one field: speed, center, remainder, exit flag."""

    c: float
    x: float
    eta: Field
    exited: bool
    t: float = 0.0
    newton_residual: float = 0.0


@dataclass
class ModCoefficients:
    """Drift pair (y, a), martingale representers and the 2x2 Jacobian."""

    y: float
    a: float
    z_rep: Field
    b_rep: Field
    jacobian: np.ndarray


class ModulationTracker:
    """Batched decomposition and modulation-system assembly around c0."""

    def __init__(
        self,
        grid: GridSpec,
        c0: float,
        alpha: float,
        eps: float,
        kernel: KernelSpec | None = None,
        newton_tol: float = 1e-11,
        max_iter: int = 50,
    ):
        self.grid = grid
        self.c0 = float(c0)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.kernel = kernel
        self.newton_tol = newton_tol
        self.max_iter = max_iter

        x = grid.x
        self.phi0 = soliton_values(c0, x)
        self.dphi0 = soliton_dx_values(c0, x)
        self.d2phi0 = deriv_values(grid, self.dphi0)
        self.d3phi0 = deriv_values(grid, self.d2phi0)
        op = LinearizedOperator(c0, grid)
        self.L_d2phi0 = apply_L_values(op, self.d2phi0)
        self.dphi0_sq = float(inner_values(grid, self.dphi0, self.dphi0))

    # -- decomposition ----------------------------------------------------

    def decompose_batch(self, u: np.ndarray, c_guess, x_guess):
        """Newton-solve the orthogonality conditions for each path.

        Returns (c, x, r, ok, resid) where r = u(.+x) - phi_c is the raw
        remainder (eps*eta) and ok flags converged paths with positive speed.
        """
        g = self.grid
        u = np.atleast_2d(u)
        P = u.shape[0]
        c = np.broadcast_to(np.asarray(c_guess, float), (P,)).copy()
        x = np.broadcast_to(np.asarray(x_guess, float), (P,)).copy()
        uhat = np.fft.rfft(u, axis=-1)
        scale = 1.0 + norm_l2(g, u)
        tol = self.newton_tol * scale
        ok = np.ones(P, dtype=bool)
        resid = np.full(P, np.inf)
        tru = None
        for _ in range(self.max_iter):
            phase = np.exp(1j * x[:, None] * g.k)
            tru = np.fft.irfft(uhat * phase, n=g.npoints, axis=-1)
            cc = np.where(c > 1e-6, c, 1e-6)[:, None]
            r = tru - phi_b(cc, g.x)
            f1 = inner_values(g, r, self.phi0)
            f2 = inner_values(g, r, self.dphi0)
            resid = np.abs(f1) + np.abs(f2)
            active = ok & (resid > tol)
            if not np.any(active):
                break
            trdu = np.fft.irfft(uhat * phase * (1j * g.k), n=g.npoints, axis=-1)
            dcphi = dcphi_b(cc, g.x)
            j11 = -inner_values(g, dcphi, self.phi0)
            j12 = inner_values(g, trdu, self.phi0)
            j21 = -inner_values(g, dcphi, self.dphi0)
            j22 = inner_values(g, trdu, self.dphi0)
            det = j11 * j22 - j12 * j21
            bad = np.abs(det) < 1e-14
            ok &= ~bad
            det = np.where(bad, 1.0, det)
            dc = -(j22 * f1 - j12 * f2) / det
            dxs = -(-j21 * f1 + j11 * f2) / det
            c = np.where(active, c + dc, c)
            x = np.where(active, x + dxs, x)
            ok &= c > 0
            c = np.where(c > 1e-6, c, 1e-6)
        ok &= resid <= tol
        phase = np.exp(1j * x[:, None] * g.k)
        tru = np.fft.irfft(uhat * phase, n=g.npoints, axis=-1)
        r = tru - phi_b(np.where(c > 1e-6, c, 1e-6)[:, None], g.x)
        return c, x, r, ok, resid

    def exit_test(self, c: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Tube test of the stopping time: speed offset or H1 remainder."""
        return (np.abs(c - self.c0) > self.alpha) | (norm_h1(self.grid, r) > self.alpha)

    def eta_from_raw(self, r: np.ndarray) -> np.ndarray:
        return r if self.eps == 0.0 else r / self.eps

    # -- modulation system -------------------------------------------------

    def jacobian_batch(self, c: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """The 2x2 drift/martingale matrix per path, rows stacked as (P,2,2)."""
        g = self.grid
        cc = np.atleast_1d(np.asarray(c, float))[:, None]
        eta = np.atleast_2d(eta)
        dphic = dxphi_b(cc, g.x)
        dcphic = dcphi_b(cc, g.x)
        deta = deriv_values(g, eta)
        a11 = inner_values(g, dphic + self.eps * deta, self.dphi0)
        a12 = -inner_values(g, dcphic, self.dphi0)
        a21 = -inner_values(g, dphic, self.phi0)
        a22 = inner_values(g, dcphic, self.phi0)
        return np.stack(
            [np.stack([a11, a12], axis=-1), np.stack([a21, a22], axis=-1)], axis=-2
        )

    @staticmethod
    def _inv2(a: np.ndarray) -> np.ndarray:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        scale = np.abs(a).max(axis=(-2, -1)) ** 2
        if np.any(np.abs(det) < 1e-12 * np.maximum(scale, 1e-30)):
            raise DecompositionFailure("singular modulation matrix (soliton lost)")
        inv = np.empty_like(a)
        inv[..., 0, 0] = a[..., 1, 1]
        inv[..., 0, 1] = -a[..., 0, 1]
        inv[..., 1, 0] = -a[..., 1, 0]
        inv[..., 1, 1] = a[..., 0, 0]
        return inv / det[..., None, None]

    def martingale_batch(self, c: np.ndarray, x: np.ndarray, eta: np.ndarray):
        """Solve the martingale system at the representer level.

        Returns (z_frame, b_frame, ainv): soliton-frame representer fields
        such that the lab-frame representers are their translations by -x.
        """
        g = self.grid
        cc = np.atleast_1d(np.asarray(c, float))[:, None]
        eta = np.atleast_2d(eta)
        ainv = self._inv2(self.jacobian_batch(c, eta))
        w = phi_b(cc, g.x) + self.eps * eta
        p = -w * self.dphi0
        q = w * self.phi0
        z_frame = ainv[..., 0, 0, None] * p + ainv[..., 0, 1, None] * q
        b_frame = ainv[..., 1, 0, None] * p + ainv[..., 1, 1, None] * q
        return z_frame, b_frame, ainv

    def drift_batch(
        self,
        c: np.ndarray,
        x: np.ndarray,
        eta: np.ndarray,
        z_frame: np.ndarray,
        b_frame: np.ndarray,
        ainv: np.ndarray,
    ):
        """Assemble G term by term and return Y = A^{-1} G as (y, a).

        All kernel-mode sums are evaluated through the representer identity
        sum_l (f, Phi e_l)(g, Phi e_l) = (Phi* f, Phi* g); translations drop
        out of those pairings, so everything stays in the soliton frame.
        """
        if self.kernel is None:
            raise ValueError("drift assembly requires the noise kernel")
        g = self.grid
        eps = self.eps
        cc = np.atleast_1d(np.asarray(c, float))[:, None]
        eta = np.atleast_2d(eta)
        phic = phi_b(cc, g.x)
        dphic_dc2 = dc2phi_b(cc, g.x)
        d2phic = deriv_values(g, dxphi_b(cc, g.x))

        pz = smoother_adjoint_values(self.kernel, z_frame)
        pb = smoother_adjoint_values(self.kernel, b_frame)
        pz_sq = inner_values(g, pz, pz)
        pb_sq = inner_values(g, pb, pb)
        s_phi_d2 = smoother_adjoint_values(self.kernel, phic * self.d2phi0)
        s_eta_d2 = smoother_adjoint_values(self.kernel, eta * self.d2phi0)
        s_phi_d1 = smoother_adjoint_values(self.kernel, phic * self.dphi0)
        s_eta_d1 = smoother_adjoint_values(self.kernel, eta * self.dphi0)

        c_off = cc[:, 0] - self.c0
        eta_sq = eta * eta
        g1 = (
            inner_values(g, eta, self.L_d2phi0)
            + c_off * inner_values(g, eta, self.d2phi0)
            - 0.5 * eps * inner_values(g, eta_sq, self.d2phi0)
            - inner_values(g, (phic - self.phi0) * eta, self.d2phi0)
            - 0.5 * eps * pz_sq * inner_values(g, d2phic, self.dphi0)
            + 0.5 * eps * pb_sq * inner_values(g, dphic_dc2, self.dphi0)
            + eps * inner_values(g, pz, s_phi_d2)
            + 0.5 * eps**2 * pz_sq * inner_values(g, eta, self.d3phi0)
            + eps**2 * inner_values(g, s_eta_d2, pz)
        )
        g2 = (
            0.5 * eps * inner_values(g, eta_sq, self.dphi0)
            + inner_values(g, (phic - self.phi0) * eta, self.dphi0)
            + 0.5 * eps * pz_sq * inner_values(g, d2phic, self.phi0)
            - 0.5 * eps * pb_sq * inner_values(g, dphic_dc2, self.phi0)
            - eps * inner_values(g, pz, s_phi_d1)
            + 0.5 * eps**2 * pz_sq * inner_values(g, eta, self.d2phi0)
            - eps**2 * inner_values(g, s_eta_d1, pz)
        )
        y = ainv[..., 0, 0] * g1 + ainv[..., 0, 1] * g2
        a = ainv[..., 1, 0] * g1 + ainv[..., 1, 1] * g2
        return y, a


# ---------------------------------------------------------------------------
# single-field public API
# ---------------------------------------------------------------------------

def decompose(
    u: Field,
    guess,
    c0: float,
    alpha: float,
    eps: float,
    newton_tol: float = 1e-11,
    max_iter: int = 50,
) -> ModulationState:
    """Decompose one field; ``guess`` is a SolitonParams-like (c, x0) pair."""
    tracker = ModulationTracker(
        u.grid, c0, alpha, eps, newton_tol=newton_tol, max_iter=max_iter
    )
    c, x, r, ok, resid = tracker.decompose_batch(
        u.values, getattr(guess, "c", guess[0]), getattr(guess, "x0", guess[-1])
    )
    if not ok[0]:
        raise DecompositionFailure(
            f"Newton did not converge (residual {resid[0]:.3e}); soliton lost"
        )
    eta = tracker.eta_from_raw(r)[0]
    exited = bool(tracker.exit_test(c, r)[0])
    return ModulationState(
        c=float(c[0]), x=float(x[0]), eta=Field(u.grid, eta), exited=exited,
        newton_residual=float(resid[0]),
    )


def jacobian_A(state: ModulationState, c0: float, eps: float) -> np.ndarray:
    tracker = ModulationTracker(state.eta.grid, c0, alpha=np.inf, eps=eps)
    return tracker.jacobian_batch(np.array([state.c]), state.eta.values)[0]


def solve_martingale(
    state: ModulationState, c0: float, eps: float, kernel: KernelSpec
) -> tuple[Field, Field]:
    """Lab-frame martingale representers (z, b) for one state."""
    g = state.eta.grid
    tracker = ModulationTracker(g, c0, alpha=np.inf, eps=eps, kernel=kernel)
    z_f, b_f, _ = tracker.martingale_batch(
        np.array([state.c]), np.array([state.x]), state.eta.values
    )
    z_rep = translate_values(g, z_f, -np.array([state.x]))[0]
    b_rep = translate_values(g, b_f, -np.array([state.x]))[0]
    return Field(g, z_rep), Field(g, b_rep)


def solve_drift(
    state: ModulationState, c0: float, eps: float, kernel: KernelSpec
) -> tuple[float, float]:
    """Drift pair (y, a) for one state."""
    g = state.eta.grid
    tracker = ModulationTracker(g, c0, alpha=np.inf, eps=eps, kernel=kernel)
    cs, xs = np.array([state.c]), np.array([state.x])
    z_f, b_f, ainv = tracker.martingale_batch(cs, xs, state.eta.values)
    y, a = tracker.drift_batch(cs, xs, state.eta.values, z_f, b_f, ainv)
    return float(y[0]), float(a[0])


def mod_coefficients(
    state: ModulationState, c0: float, eps: float, kernel: KernelSpec
) -> ModCoefficients:
    """Full coefficient record (drift pair, representers, Jacobian)."""
    g = state.eta.grid
    tracker = ModulationTracker(g, c0, alpha=np.inf, eps=eps, kernel=kernel)
    cs, xs = np.array([state.c]), np.array([state.x])
    amat = tracker.jacobian_batch(cs, state.eta.values)[0]
    z_f, b_f, ainv = tracker.martingale_batch(cs, xs, state.eta.values)
    y, a = tracker.drift_batch(cs, xs, state.eta.values, z_f, b_f, ainv)
    z_rep = translate_values(g, z_f, -xs)[0]
    b_rep = translate_values(g, b_f, -xs)[0]
    return ModCoefficients(
        y=float(y[0]), a=float(a[0]), z_rep=Field(g, z_rep), b_rep=Field(g, b_rep),
        jacobian=amat,
    )


def track(
    snapshots,
    c0: float,
    alpha: float,
    eps: float,
    warm_start=None,
) -> tuple[list[ModulationState], float | None]:
    """Decompose a recorded trajectory; returns (states, exit time).

    ``snapshots`` is an iterable of (t, Field) from the integrator, starting
    near the soliton.  Each decomposition warm-starts from the previous
    state with the center advanced ballistically.  The first snapshot
    violating the tube conditions (or failing Newton) sets the exit time;
    tracking stops there.
    """
    states: list[ModulationState] = []
    tau = None
    snapshots = list(snapshots)
    if not snapshots:
        return states, tau
    grid = snapshots[0][1].grid
    tracker = ModulationTracker(grid, c0, alpha, eps)
    c_prev, x_prev = (c0, 0.0) if warm_start is None else warm_start
    t_prev = snapshots[0][0]
    for t, field in snapshots:
        guess_x = x_prev + c_prev * (t - t_prev)
        c, x, r, ok, resid = tracker.decompose_batch(field.values, c_prev, guess_x)
        if not ok[0]:
            tau = t
            states.append(
                ModulationState(
                    c=float(c[0]), x=float(x[0]),
                    eta=Field(grid, tracker.eta_from_raw(r)[0]),
                    exited=True, t=t, newton_residual=float(resid[0]),
                )
            )
            break
        exited = bool(tracker.exit_test(c, r)[0])
        states.append(
            ModulationState(
                c=float(c[0]), x=float(x[0]),
                eta=Field(grid, tracker.eta_from_raw(r)[0]),
                exited=exited, t=t, newton_residual=float(resid[0]),
            )
        )
        if exited:
            tau = t
            break
        c_prev, x_prev, t_prev = float(c[0]), float(x[0]), t
    return states, tau


def refine_center(states, lambdas, eps: float):
    """Shift centers by -eps*lambda and rebuild the remainder accordingly.

    Returns (x_refined, eta_refined) lists; for lambda = 0 the input is
    reproduced exactly.
    """
    xs_out, etas_out = [], []
    for state, lam in zip(states, lambdas):
        g = state.eta.grid
        xs_out.append(state.x - eps * lam)
        shift = -eps * lam
        phic = phi_b(np.array([[state.c]]), g.x)[0]
        phic_shift = translate_values(g, phic, shift)
        eta_shift = translate_values(g, state.eta.values, shift)
        if eps == 0.0:
            etas_out.append(Field(g, eta_shift))
        else:
            etas_out.append(Field(g, (phic_shift - phic) / eps + eta_shift))
    return xs_out, etas_out
