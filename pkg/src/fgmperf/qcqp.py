"""Reduced dual of the multiple-kernel bundle subproblem.

Solves::

    max_{alpha, theta}  -theta + q' alpha
    s.t.  0.5 alpha' G_t alpha <= theta   for every group t
          sum(alpha) <= C,  alpha >= 0

through its epigraph form ``min gamma  s.t.  0.5 a'G_t a - q'a <= gamma``.
A primal-dual interior-point method (Mehrotra predictor-corrector) finds the
active set, an active-set Newton iteration on the KKT equations finishes it,
and warm starts go straight to the active-set stage. The multipliers of the
quadratic constraints are the group weights ``mu`` and sum to one at optimality.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, cho_factor, cho_solve, lu_factor, lu_solve

logger = logging.getLogger(__name__)


class QcqpError(ValueError):
    pass


class QcqpConvergenceError(RuntimeError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass
class QcqpInput:
    """Problem data. Give the Gram matrices ``G`` (T, K, K), or factors ``P`` with ``G_t = P_t P_t'``.

    The solver works on factors; dense ``G`` is factored by ``eigh``.
    """

    G: np.ndarray | None
    q: np.ndarray  # (K,)
    C: float
    P: list | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64).ravel()
        K = self.q.size
        if self.P is not None:
            self.P = [np.asarray(p, dtype=np.float64).reshape(K, -1) for p in self.P]
            if self.G is not None:
                raise QcqpError("give G or P, not both")
            T = len(self.P)
        else:
            if self.G is None:
                raise QcqpError("G or P is required")
            self.G = np.asarray(self.G, dtype=np.float64)
            if self.G.ndim == 2:
                self.G = self.G[None]
            T, K1, K2 = self.G.shape
            if K1 != K2 or K1 != K:
                raise QcqpError(f"shape mismatch: G {self.G.shape}, q {self.q.shape}")
        if K < 1 or T < 1:
            raise QcqpError("need at least one cut and one group")
        if not self.C > 0:
            raise QcqpError("capacity C must be positive")

    @property
    def T(self):
        return len(self.P) if self.P is not None else self.G.shape[0]

    @property
    def K(self):
        return self.q.size

    def factors(self):
        if self.P is not None:
            return self.P
        out = []
        for g in self.G:
            w, V = np.linalg.eigh(0.5 * (g + g.T))
            keep = w > 1e-15 * max(1.0, float(w.max()) if w.size else 0.0)
            out.append(V[:, keep] * np.sqrt(w[keep]))
        return out


@dataclass
class QcqpSolution:
    alpha: np.ndarray
    theta: float
    mu: np.ndarray
    objective: float
    kkt_residual: float
    slackness: float = 0.0
    cap_multiplier: float = 0.0
    sign_multipliers: np.ndarray | None = None
    active: bool = True
    iterations: int = 0
    method: str = ""


def check_psd(G, rel_tol=1e-9):
    """Symmetric and PSD up to a trace-relative tolerance; raises QcqpError."""
    for t, g in enumerate(G):
        scale = max(1.0, float(np.abs(g).max()))
        if not np.allclose(g, g.T, rtol=0, atol=1e-10 * scale):
            raise QcqpError(f"G[{t}] is not symmetric")
        lo = float(np.linalg.eigvalsh(g)[0])
        if lo < -rel_tol * max(1.0, float(np.trace(g))):
            raise QcqpError(f"G[{t}] is not positive semidefinite (min eigenvalue {lo:.3g})")


class _Gram:
    """The T Gram matrices ``P_t P_t'`` held as factors."""

    def __init__(self, P):
        self.P = P
        self.T = len(P)
        self.K = P[0].shape[0]
        self.width = np.array([p.shape[1] for p in P])
        self.all = np.hstack(P) if self.width.sum() else np.zeros((self.K, 0))
        self.owner = np.repeat(np.arange(self.T), self.width)

    def proj(self, a):
        return self.all.T @ a  # stacked P_t' a

    def quad(self, a):
        u = self.proj(a)
        return 0.5 * np.bincount(self.owner, weights=u * u, minlength=self.T)

    def each(self, a):
        """(T, K) array of ``G_t a``."""
        u = self.proj(a)
        return np.stack([p @ u[self.owner == t] for t, p in enumerate(self.P)])

    def mixed(self, mu, a):
        """``sum_t mu_t G_t a``."""
        return self.all @ (mu[self.owner] * self.proj(a))

    def mixed_matrix(self, mu, rows=None):
        Pm = self.all if rows is None else self.all[rows]
        Ps = Pm * np.sqrt(np.maximum(mu[self.owner], 0.0))
        return Ps @ Ps.T

    def block(self, groups, rows):
        """(len(groups), len(rows), len(rows)) stack of ``G_t[rows, rows]``."""
        return np.stack([self.P[t][rows] @ self.P[t][rows].T for t in groups])

    def max_entry(self):
        return float(max((np.einsum("ij,ij->i", p, p).max() if p.size else 0.0) for p in self.P))


def _interior_point(gram, q, tol, max_iter):
    """Mehrotra predictor-corrector on ``min gamma`` over the unit capped simplex.

    Variables x = (beta, gamma); every constraint ``c_i(x) <= 0`` gets a slack
    ``s_i`` so the iterates only need ``s, z > 0``. Returns beta, the
    multipliers ``z`` ordered (quadratic, sign, capacity) and the iteration count.
    """
    T, K = gram.T, gram.K
    mc = T + K + 1
    beta = np.full(K, 1.0 / (K + 1.0))
    quad = gram.quad(beta) - q @ beta
    gamma = quad.max() + 1.0
    z = np.concatenate((np.full(T, 1.0 / T), np.ones(K + 1)))
    s = np.ones(mc)
    Tk = np.arange(T, T + K)

    best = (np.inf, beta, z, 0)
    it = 0
    for it in range(1, max_iter + 1):
        Gb = gram.each(beta)
        c = np.concatenate((0.5 * Gb @ beta - q @ beta - gamma, -beta, [beta.sum() - 1.0]))
        zq, zs, zc = z[:T], z[Tk], z[-1]
        Jq = Gb - q  # d c_quad / d beta, rows per group
        r_d = np.concatenate((zq @ Jq - zs + zc, [1.0 - zq.sum()]))
        r_p = c + s
        gap = s @ z / mc
        merit = max(np.abs(r_d).max(), np.abs(r_p).max(), gap)
        if not np.isfinite(merit):
            break
        if merit < best[0]:
            best = (merit, beta.copy(), z.copy(), it)
        elif it - best[3] >= 5 and best[0] < 1e-7:
            break  # rounding dominates the Newton systems; keep the best iterate
        if merit <= tol:
            break

        # M = H + J' D J with J = [[Jq, -1], [-I, 0], [1', 0]] assembled blockwise
        D = z / s
        Dq, Ds, Dc = D[:T], D[Tk], D[-1]
        M = np.empty((K + 1, K + 1))
        M[:K, :K] = gram.mixed_matrix(zq) + (Jq.T * Dq) @ Jq + Dc
        M[np.arange(K), np.arange(K)] += Ds
        M[:K, K] = M[K, :K] = -(Jq.T @ Dq)
        M[K, K] = Dq.sum()

        def jmul(x):
            return np.concatenate((Jq @ x[:K] - x[K], -x[:K], [x[:K].sum()]))

        def jtmul(y):
            return np.concatenate((y[:T] @ Jq - y[Tk] + y[-1], [-y[:T].sum()]))

        solve0 = None
        for shift in (0.0, 1e-12, 1e-9):
            try:
                cho = cho_factor(M + shift * np.diag(np.diag(M)), check_finite=False)
            except LinAlgError:
                continue
            solve0 = lambda r, cho=cho: cho_solve(cho, r, check_finite=False)  # noqa: E731
            break
        if solve0 is None:
            solve0 = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731

        def solve_m(r):
            x = solve0(r)
            return x + solve0(r - M @ x)  # one refinement step

        def direction(r_c):
            # S dz + Z ds = -r_c, ds = -r_p - J dx
            dx = solve_m(-r_d - jtmul((-r_c + z * r_p) / s))
            ds = -r_p - jmul(dx)
            dz = (-r_c - z * ds) / s
            return dx, ds, dz

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        dx, ds, dz = direction(s * z)
        a_aff = min(max_step(s, ds), max_step(z, dz))
        gap_aff = (s + a_aff * ds) @ (z + a_aff * dz) / mc
        sigma = (gap_aff / gap) ** 3 if gap > 0 else 0.0
        dx, ds, dz = direction(s * z + ds * dz - sigma * gap)
        step = 0.99 * min(max_step(s, ds), max_step(z, dz))
        beta = beta + step * dx[:K]
        gamma = gamma + step * dx[K]
        s = s + step * ds
        z = z + step * dz
    return best[1], best[2], it


def _finalize(gram, q, C, alpha, lam, iterations):
    T, K = gram.T, gram.K
    # an interior iterate pairs each bound with its multiplier; keep the larger side
    alpha = np.where(alpha <= lam[T:T + K], 0.0, np.maximum(alpha, 0.0))
    if alpha.sum() > 0 and (alpha.sum() > C or C - alpha.sum() <= lam[-1]):
        alpha *= C / alpha.sum()
    lq = np.maximum(lam[:T], 0.0)
    mu = lq / lq.sum() if lq.sum() > 0 else np.full(T, 1.0 / T)
    quad = gram.quad(alpha)
    theta = float(max(quad.max(), 0.0))
    grad = q - gram.mixed(mu, alpha)
    # capacity multiplier from the free coordinates, sign multipliers from the rest
    cap_slack = C - alpha.sum()
    if cap_slack > 1e-12 * max(1.0, C):
        lam_cap = 0.0
    else:
        free = alpha > 0
        lam_cap = float(max(0.0, grad[free].max() if np.any(free) else grad.max()))
    s = np.maximum(lam_cap - grad, 0.0)
    s[alpha > 0] = 0.0
    stationarity = grad - lam_cap + s
    kkt = float(np.abs(stationarity).max())
    slack = float(np.max(mu * (theta - quad)))
    return QcqpSolution(alpha=alpha, theta=theta, mu=mu, objective=float(q @ alpha - theta),
                        kkt_residual=kkt, slackness=slack, cap_multiplier=lam_cap,
                        sign_multipliers=s, iterations=iterations)


def _active_newton(gram, q, C, alpha, mu, F, A, capped, steps=30):
    """Newton on the KKT equalities for a fixed active set.

    Unknowns are alpha_F, mu_A, theta and (if ``capped``) the cap multiplier.
    Equations: ``sum_t mu_t G_t[F] alpha + lam 1 = q_F``, ``sum alpha_F = C``,
    ``0.5 alpha' G_t alpha = theta`` on A and ``sum mu_A = 1``.
    """
    nf, na = F.size, A.size
    GF = gram.block(A, F)
    x_a, x_mu = alpha[F].copy(), mu[A].copy()
    theta = float(np.max(0.5 * np.einsum("i,tij,j->t", x_a, GF, x_a)))
    lam = 0.0
    if capped:
        lam = float(np.mean(q[F] - np.einsum("t,tij,j->i", x_mu, GF, x_a)))
    last = np.inf
    for _ in range(steps):
        Ga = GF @ x_a  # (na, nf)
        r = [q[F] - x_mu @ Ga - lam, 0.5 * Ga @ x_a - theta, [x_mu.sum() - 1.0]]
        if capped:
            r.append([x_a.sum() - C])
        r = np.concatenate(r)
        if np.abs(r).max() <= 1e-15 * max(1.0, np.abs(q).max()):
            break
        nv = nf + na + 1 + int(capped)
        Jm = np.zeros((r.size, nv))
        Jm[:nf, :nf] = -np.einsum("t,tij->ij", x_mu, GF)
        Jm[:nf, nf:nf + na] = -Ga.T
        Jm[nf:nf + na, :nf] = Ga
        Jm[nf:nf + na, nf + na] = -1.0
        Jm[nf + na, nf:nf + na] = 1.0
        if capped:
            Jm[:nf, -1] = -1.0
            Jm[-1, :nf] = 1.0
        res = float(np.abs(r).max())
        if res >= last * 0.5 and res < 1e-9 * max(1.0, np.abs(q).max()):
            break  # converged to rounding level
        last = res
        d = None
        if Jm.shape[0] == Jm.shape[1]:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", LinAlgWarning)
                    lu = lu_factor(Jm, check_finite=False)
                if np.abs(np.diag(lu[0])).min() > 1e-10 * np.abs(lu[0]).max():
                    d = lu_solve(lu, -r, check_finite=False)
            except (LinAlgError, ValueError):
                d = None
        if d is None:
            d = np.linalg.lstsq(Jm, -r, rcond=1e-12)[0]
        x_a, x_mu, theta = x_a + d[:nf], x_mu + d[nf:nf + na], theta + d[nf + na]
        if capped:
            lam += d[-1]
    return x_a, x_mu, lam


def _active_set(gram, q, C, alpha, mu, capped, max_rounds):
    """Active-set iteration on the KKT system from a starting (alpha, mu).

    Coordinates that leave the orthant (or groups whose weight turns
    negative) are dropped by a ratio test, and the worst dual violator is
    added, until the sets are stable. Returns ``(alpha, mu, lam_cap, rounds)``
    or None when the iteration breaks down.
    """
    T, K = gram.T, gram.K
    alpha, mu = alpha.copy(), mu.copy()
    free = alpha > 0
    act = mu > 1e-12
    if not act.any():
        act[:] = True
        mu[:] = 1.0 / T
    if not free.any():
        free[int(np.argmax(q - gram.mixed(mu, alpha)))] = True
    lam = 0.0
    for rounds in range(1, max_rounds + 1):
        F, A = np.flatnonzero(free), np.flatnonzero(act)
        if F.size == 0 or A.size == 0:
            return None
        a_F, m_A, lam = _active_newton(gram, q, C, alpha, mu, F, A, capped)
        if not (np.all(np.isfinite(a_F)) and np.all(np.isfinite(m_A))):
            return None
        if np.any(a_F <= 0) or np.any(m_A < 0):
            # ratio test: walk toward the Newton point until something hits zero
            cur = np.concatenate((alpha[F], mu[A]))
            tgt = np.concatenate((a_F, m_A))
            dec = tgt < cur
            ratios = np.full(cur.size, np.inf)
            ratios[dec] = cur[dec] / (cur[dec] - tgt[dec])
            j = int(np.argmin(ratios))
            new = cur + min(1.0, ratios[j]) * (tgt - cur)
            alpha[F], mu[A] = np.maximum(new[:F.size], 0.0), np.maximum(new[F.size:], 0.0)
            if j < F.size:
                free[F[j]] = False
                alpha[F[j]] = 0.0
            else:
                act[A[j - F.size]] = False
                mu[A[j - F.size]] = 0.0
            if mu.sum() <= 0:
                return None
            mu /= mu.sum()
            continue
        alpha[:] = 0.0
        alpha[F] = a_F
        mu[:] = 0.0
        mu[A] = m_A
        if capped and lam < 0:
            capped = False
            continue
        if not capped and alpha.sum() > C:
            capped = True
            continue
        quad = gram.quad(alpha)
        over = quad - quad[A].max()
        over[act] = -np.inf
        if over.max() > 0:
            act[int(np.argmax(over))] = True
            continue
        viol = q - gram.mixed(mu, alpha) - lam
        viol[free] = -np.inf
        j = int(np.argmax(viol))
        if viol[j] <= 0:
            break
        free[j] = True
    else:
        return None
    if alpha.sum() > C * (1 + 1e-12):
        return None
    return alpha, mu, (lam if capped else 0.0), rounds


def _certify(gram, q, C, start, iterations):
    """Run the active-set iteration from ``start`` and measure its KKT residuals."""
    alpha, mu, capped, max_rounds = start
    out = _active_set(gram, q, C, alpha, mu, capped, max_rounds)
    if out is None:
        return None
    alpha, mu, lam, rounds = out
    lam_vec = np.concatenate((mu, np.zeros(gram.K), [lam]))
    return _finalize(gram, q, C, alpha, lam_vec, iterations + rounds)


def _worst(sol):
    if sol is None:
        return np.inf
    r = max(sol.kkt_residual, sol.slackness)
    return r if np.isfinite(r) and np.all(np.isfinite(sol.alpha)) else np.inf


def solve(inp: QcqpInput, tol: float = 1e-8, max_iter: int = 500, check: bool = True,
          warm=None) -> QcqpSolution:
    """Solve the reduced QCQP and certify the result by its KKT residual.

    ``warm = (alpha, mu)`` from a related problem (for instance before a cut
    or a group was added) is tried first by active-set iteration; the
    interior-point method is the fallback and the cold start.

    Groups whose Gram matrix vanishes carry an implied constraint and get
    ``mu_t = 0`` unless every group is degenerate. When ``theta`` is zero the
    weights are reported uniform over the non-degenerate groups and the
    solution is flagged inactive.
    """
    q, C, T, K = inp.q, float(inp.C), inp.T, inp.K
    if check and inp.G is not None:
        check_psd(inp.G)
    P = inp.factors()
    live = np.array([p.size > 0 and np.abs(p).max() > 0 for p in P])
    use = np.flatnonzero(live) if live.any() else np.arange(T)
    gram = _Gram([P[t] for t in use])
    scale = max(1.0, float(np.abs(q).max()), C * gram.max_entry())
    limit = tol * scale

    sol = None
    if np.all(q <= 0):
        lam = np.concatenate((np.full(use.size, 1.0 / use.size), np.zeros(K + 1)))
        sol = _finalize(gram, q, C, np.zeros(K), lam, 0)
        sol.method = "trivial"
    if sol is None and warm is not None:
        a0 = np.maximum(np.asarray(warm[0], dtype=np.float64), 0.0)
        m0 = np.maximum(np.asarray(warm[1], dtype=np.float64)[use], 0.0)
        if a0.shape == (K,) and m0.sum() > 0:
            cand = _certify(gram, q, C, (a0, m0 / m0.sum(), a0.sum() >= C * (1 - 1e-9), 4 * (T + 25)), 0)
            if _worst(cand) <= limit:
                sol, sol.method = cand, "warm"
    if sol is None:
        # unit capacity and unit objective scale: alpha = C * beta
        norm = max(C * C * gram.max_entry(), C * float(np.abs(q).max()))
        scaled = _Gram([p * (C / np.sqrt(norm)) for p in gram.P])
        beta, z, its = _interior_point(scaled, q * C / norm, 1e-3 * tol, max_iter)
        lam = np.concatenate((z[:use.size], z[use.size:] * norm / C))
        sol = _finalize(gram, q, C, C * beta, lam, its)
        sol.method = "interior-point"
        cand = _certify(gram, q, C, (sol.alpha, sol.mu, sol.cap_multiplier > 0, 2 * (K + T) + 2), its)
        if _worst(cand) < _worst(sol):
            sol, sol.method = cand, "interior-point+active-set"

    mu = np.zeros(T)
    mu[use] = sol.mu
    sol.mu = mu
    if sol.theta <= tol:
        sol.mu = np.zeros(T)
        sol.mu[use] = 1.0 / use.size
        sol.active = False
        sol.slackness = float(np.max(sol.mu[use] * (sol.theta - gram.quad(sol.alpha))))
    if not _worst(sol) <= limit:
        raise QcqpConvergenceError(
            f"QCQP did not reach tolerance: kkt={sol.kkt_residual:.3g}, slackness={sol.slackness:.3g}",
            best=sol, residual=_worst(sol))
    logger.debug("qcqp K=%d T=%d method=%s iterations=%d objective=%.12g",
                 K, T, sol.method, sol.iterations, sol.objective)
    return sol


def recover_group_weights(sol: QcqpSolution, blocks):
    """``w_t = -mu_t * sum_k alpha_k p_t^k``; ``blocks[t]`` is the (K, |d_t|) matrix of cut blocks."""
    return [-sol.mu[t] * (sol.alpha @ P) for t, P in enumerate(blocks)]


def reduced_primal_objective(G, q, C, alpha, mu):
    """Primal value ``0.5 (sum_t ||w_t||)^2 + C max(0, max_k <w, p^k> + q_k)`` at the recovered weights.

    Only needs the Gram matrices: ``||w_t||^2 = mu_t^2 a'G_t a`` and
    ``<w, p^k> = -sum_t mu_t (G_t a)_k``.
    """
    G = np.asarray(G, dtype=np.float64)
    norms = np.asarray(mu) * np.sqrt(np.maximum(np.einsum("i,tij,j->t", alpha, G, alpha), 0.0))
    margins = q - np.einsum("t,tij,j->i", mu, G, alpha)
    return 0.5 * norms.sum() ** 2 + C * max(0.0, float(margins.max()))


def saddle_value(G, q, C, alpha):
    """Dual objective ``q'a - max_t 0.5 a'G_t a`` at any feasible ``alpha``."""
    return float(q @ alpha - 0.5 * np.einsum("i,tij,j->t", alpha, G, alpha).max())


# -- reference oracles -------------------------------------------------------

def _face_solve(M, r):
    """Batched ``M x = r``; singular systems fall back to least squares and are kept only if consistent."""
    try:
        return np.linalg.solve(M, r[..., None])[..., 0], np.ones(len(M), dtype=bool)
    except np.linalg.LinAlgError:
        pass
    x = np.empty_like(r)
    ok = np.empty(len(M), dtype=bool)
    for i in range(len(M)):
        x[i] = np.linalg.lstsq(M[i], r[i], rcond=None)[0]
        ok[i] = np.linalg.norm(M[i] @ x[i] - r[i]) <= 1e-9 * (1.0 + np.abs(r[i]).max())
    return x, ok


def _capped_qp_value(Gm, q, C):
    """``max_{a >= 0, sum a <= C} q'a - 0.5 a'Gm a`` by enumerating KKT faces.

    Intended for K <= 10. Singular faces keep only consistent stationary points.
    """
    K = q.size
    best = 0.0
    for size in range(1, K + 1):
        subsets = np.array(list(itertools.combinations(range(K), size)))
        Gs = Gm[subsets[:, :, None], subsets[:, None, :]]
        qs = q[subsets]
        # cap inactive: G_SS a_S = q_S
        a, a_ok = _face_solve(Gs, qs)
        # cap active: [G_SS 1; 1' 0][a; lam] = [q_S; C]
        kk = np.zeros((len(subsets), size + 1, size + 1))
        kk[:, :size, :size] = Gs
        kk[:, :size, size] = 1.0
        kk[:, size, :size] = 1.0
        rhs = np.concatenate((qs, np.full((len(subsets), 1), C)), axis=1)
        sol, sol_ok = _face_solve(kk, rhs)
        for cand, lam, solved in ((a, np.zeros(len(subsets)), a_ok), (sol[:, :size], sol[:, size], sol_ok)):
            ok = solved & (cand >= -1e-12).all(axis=1) & (cand.sum(axis=1) <= C * (1 + 1e-12)) & (lam >= -1e-12)
            if not ok.any():
                continue
            c = np.maximum(cand[ok], 0.0)
            S = subsets[ok]
            vals = np.einsum("ri,ri->r", qs[ok], c) - 0.5 * np.einsum("ri,rij,rj->r", c, Gs[ok], c)
            best = max(best, float(vals.max()))
    return best


def grid_search_objective(G, q, C, coarse=10, min_step=1e-7):
    """Reference optimum: minimize ``h(mu) = max_a q'a - 0.5 a'G(mu) a`` over the simplex.

    A dense grid on the simplex of group weights is refined by a compass search
    along the directions ``e_i - e_j``; ``h`` is convex, so the refined grid
    point approaches the saddle value from above.
    """
    G = np.asarray(G, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    T = G.shape[0]

    def h(mu):
        return _capped_qp_value(np.einsum("t,tij->ij", mu, G), q, C)

    if T == 1:
        return h(np.ones(1))
    pts = [np.array(c) / coarse for c in itertools.product(range(coarse + 1), repeat=T - 1)
           if sum(c) <= coarse]
    pts = [np.append(p, 1.0 - p.sum()) for p in pts]
    vals = [h(p) for p in pts]
    i = int(np.argmin(vals))
    mu, val = pts[i], vals[i]
    step = 1.0 / coarse
    dirs = [np.eye(T)[a] - np.eye(T)[b] for a in range(T) for b in range(T) if a != b]
    while step > min_step:
        moved = False
        for d in dirs:
            cand = mu + step * d
            if cand.min() < 0:
                cand = np.maximum(cand, 0.0)
                cand /= cand.sum()
            v = h(cand)
            if v < val - 1e-15:
                mu, val, moved = cand, v, True
        if not moved:
            step /= 2
    return val


def alpha_grid_objective(G, q, C, resolution=1e-3, refine=8):
    """Dense grid over the capped simplex for K = 2, refined around the best point."""
    G = np.asarray(G, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q.size != 2:
        raise ValueError("alpha grid oracle supports K = 2 only")
    lo = np.zeros(2)
    width = C
    step = resolution * C
    best_val, best = -np.inf, None
    for _ in range(refine + 1):
        g1 = np.arange(lo[0], lo[0] + width + step / 2, step)
        g2 = np.arange(lo[1], lo[1] + width + step / 2, step)
        A1, A2 = np.meshgrid(g1, g2, indexing="ij")
        A = np.stack((A1.ravel(), A2.ravel()), axis=1)
        A = A[(A >= 0).all(axis=1) & (A.sum(axis=1) <= C * (1 + 1e-12))]
        quad = 0.5 * np.einsum("ri,tij,rj->rt", A, G, A).max(axis=1)
        vals = A @ q - quad
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best = float(vals[i]), A[i]
        lo = np.maximum(best - 5 * step, 0.0)
        width = 10 * step
        step = width / 50
    return best_val
