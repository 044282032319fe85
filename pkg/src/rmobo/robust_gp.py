"""Robust GP: a Gaussian posterior over the Bayes risk ``J(x) = E[f(x + xi)]``.

Kernel expectations are estimated with a frozen set of noise draws (sample
average approximation), which makes the posterior deterministic and smooth in
``x``.  Two independent sample sets are used: ``E`` for the left argument of a
kernel and ``E2`` for the right one, paired sample-by-sample.

For the squared-exponential kernel the per-sample kernel factorizes,

    exp(-|z + eta - z_j|^2 / 2) = g_j(z) * exp(-(z - c).eta) * exp(-|eta|^2/2 + (z_j - c).eta)

(``z`` are lengthscale-scaled inputs, ``c`` a fixed centre), so averages over
the samples become matrix products instead of ``N * n`` exponentials per test
point.  When the exponents could overflow the direct evaluation is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import GpEnsemble, GpModel, kernel_eval
from .problem import Gaussian, NoiseDistribution, NoNoise, sample_noise

DEFAULT_SAMPLES = 2000
_EXP_GUARD = 200.0
_SOLVE_ROWS = 200_000
_CHUNK = 256


@dataclass(frozen=True)
class FixedNoiseSamples:
    """Noise draws frozen for a whole optimization run (original units)."""

    E: np.ndarray
    E2: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        E, E2 = np.atleast_2d(self.E), np.atleast_2d(self.E2)
        if E.shape != E2.shape or E.shape[0] < 1:
            raise ValueError("E and E2 must be non-empty and of equal shape")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "E2", E2)

    @classmethod
    def draw(cls, dist: NoiseDistribution, n: int = DEFAULT_SAMPLES, seed: int = 0) -> "FixedNoiseSamples":
        ss = np.random.SeedSequence(seed)
        left, right = (np.random.default_rng(s) for s in ss.spawn(2))
        return cls(sample_noise(dist, n, left), sample_noise(dist, n, right), seed)

    @property
    def N(self) -> int:
        return self.E.shape[0]

    def subset(self, n: int) -> "FixedNoiseSamples":
        return FixedNoiseSamples(self.E[:n], self.E2[:n], self.seed)


class _ObjectiveKE:
    """Kernel-expectation machinery for one base GP, in normalized coordinates."""

    def __init__(self, model: GpModel, En: np.ndarray, E2n: np.ndarray):
        self.model = model
        self.s2 = model.kernel.variance
        self.ls = model.kernel.lengthscales
        self.N = En.shape[0]
        self.En, self.E2n = En, E2n
        self.Z = model.X_train / self.ls
        self.centre = 0.5 / self.ls
        self.Zc = self.Z - self.centre
        self.eta = En / self.ls
        self.eta2 = E2n / self.ls
        self.eta_norm = float(np.sqrt(np.max(np.sum(self.eta**2, axis=1))))
        self.eta2_norm = float(np.sqrt(np.max(np.sum(self.eta2**2, axis=1))))
        n = model.n
        self.Kinv = model.solve(np.eye(n))
        self.Kinv = 0.5 * (self.Kinv + self.Kinv.T)
        diff = self.eta - self.eta2
        self.kj_diag = float(np.mean(self.s2 * np.exp(-0.5 * np.sum(diff**2, axis=1))))
        self._A = self._A2 = self._Qsym = self._Qfull = None

    # -- factorized path ---------------------------------------------------
    def _fast_ok(self, Zc_test: np.ndarray) -> bool:
        reach = max(np.max(np.linalg.norm(Zc_test, axis=1)), np.max(np.linalg.norm(self.Zc, axis=1)))
        eta = max(self.eta_norm, self.eta2_norm)
        return reach * eta < _EXP_GUARD and 0.5 * eta**2 < _EXP_GUARD

    @property
    def A(self):
        if self._A is None:
            self._A = np.exp(-0.5 * np.sum(self.eta**2, axis=1)[:, None] + self.eta @ self.Zc.T)
        return self._A

    @property
    def A2(self):
        if self._A2 is None:
            self._A2 = np.exp(-0.5 * np.sum(self.eta2**2, axis=1)[:, None] + self.eta2 @ self.Zc.T)
        return self._A2

    @property
    def Qsym(self):
        if self._Qsym is None:
            n = self.model.n
            iu, ju = np.triu_indices(n)
            A, A2 = self.A, self.A2
            q = 0.5 * (A[:, iu] * A2[:, ju] + A[:, ju] * A2[:, iu])
            weight = np.where(iu == ju, 1.0, 2.0) * self.Kinv[iu, ju]
            self._Qsym = (q * weight, iu, ju)
        return self._Qsym

    @property
    def Qfull(self):
        if self._Qfull is None:
            n = self.model.n
            A, A2 = self.A, self.A2
            self._Qfull = (A[:, :, None] * A2[:, None, :] * self.Kinv[None]).reshape(self.N, n * n)
        return self._Qfull

    def _g(self, Z_test):
        return np.exp(-0.5 * np.sum((Z_test[:, None, :] - self.Z[None, :, :]) ** 2, axis=-1))

    def cross_mean(self, Xn: np.ndarray) -> np.ndarray:
        """``(1/N) sum_i k(x + xi_i, X_train)`` for each row of ``Xn``."""
        Zt = Xn / self.ls
        Zc = Zt - self.centre
        if self._fast_ok(Zc):
            B = np.exp(-Zc @ self.eta.T)
            return self.s2 * self._g(Zt) * (B @ self.A) / self.N
        out = np.empty((Xn.shape[0], self.model.n))
        for s in range(0, Xn.shape[0], _CHUNK):
            out[s : s + _CHUNK] = self._direct_U(Xn[s : s + _CHUNK], self.En).mean(axis=1)
        return out

    def variance(self, Xn: np.ndarray) -> np.ndarray:
        """Pair-sample estimate of ``Var[J(x) | D]`` for each row of ``Xn``."""
        Zt = Xn / self.ls
        Zc = Zt - self.centre
        if self._fast_ok(Zc):
            Q, iu, ju = self.Qsym
            out = np.empty(Xn.shape[0])
            for s in range(0, Xn.shape[0], _CHUNK):
                zc = Zc[s : s + _CHUNK]
                W = np.exp(-zc @ (self.eta + self.eta2).T)
                g = self._g(Zt[s : s + _CHUNK])
                S = W @ Q
                out[s : s + _CHUNK] = np.sum(g[:, iu] * g[:, ju] * S, axis=1)
            cross = self.s2**2 * out / self.N
        else:
            cross = self._direct_pair_cross(Xn, Xn)
        return np.maximum(self.kj_diag - cross, 0.0)

    def paired_cov(self, Xa: np.ndarray, Xb: np.ndarray) -> np.ndarray:
        """Row-wise ``Cov[J(a_r), J(b_r) | D]`` with ``E`` on ``a`` and ``E2`` on ``b``."""
        Za, Zb = Xa / self.ls, Xb / self.ls
        diff = (Za - Zb)[:, None, :] + (self.eta - self.eta2)[None, :, :]
        kj = self.s2 * np.mean(np.exp(-0.5 * np.sum(diff**2, axis=-1)), axis=1)
        Zca, Zcb = Za - self.centre, Zb - self.centre
        if self._fast_ok(np.vstack([Zca, Zcb])):
            n = self.model.n
            Q = self.Qfull
            cross = np.empty(Xa.shape[0])
            for s in range(0, Xa.shape[0], _CHUNK):
                sl = slice(s, s + _CHUNK)
                W = np.exp(-Zca[sl] @ self.eta.T - Zcb[sl] @ self.eta2.T)
                S = (W @ Q).reshape(-1, n, n)
                cross[sl] = np.einsum("rj,rjk,rk->r", self._g(Za[sl]), S, self._g(Zb[sl]))
            cross *= self.s2**2 / self.N
        else:
            cross = self._direct_pair_cross(Xa, Xb)
        return kj - cross

    # -- direct path -------------------------------------------------------
    def _direct_U(self, Xn, samples):
        shifted = (Xn[:, None, :] + samples[None, :, :]) / self.ls
        sq = np.sum(shifted**2, axis=-1)[..., None] + np.sum(self.Z**2, axis=1) - 2.0 * shifted @ self.Z.T
        return self.s2 * np.exp(-0.5 * np.maximum(sq, 0.0))

    def _direct_pair_cross(self, Xa, Xb):
        out = np.empty(Xa.shape[0])
        for r in range(Xa.shape[0]):
            U = self._direct_U(Xa[r : r + 1], self.En)[0]
            V = self._direct_U(Xb[r : r + 1], self.E2n)[0]
            TU = self.model.half_solve(U.T)
            TV = self.model.half_solve(V.T)
            out[r] = np.mean(np.sum(TU * TV, axis=0))
        return out

    def direct_mean(self, Xn):
        return self._direct_U(Xn, self.En).mean(axis=1) @ self.model.alpha

    def direct_variance(self, Xn):
        return np.maximum(self.kj_diag - self._direct_pair_cross(Xn, Xn), 0.0)

    def _solved(self, Xn, samples):
        """``L^-1 k(X_train, x + xi_i)`` for every row and sample, flattened to ``(m, n * N)``."""
        m, n = Xn.shape[0], self.model.n
        Zt = Xn / self.ls
        Zc = Zt - self.centre
        if self._fast_ok(Zc):
            first = samples is self.En
            eta, A = (self.eta, self.A) if first else (self.eta2, self.A2)
            U = self.s2 * np.exp(-Zc @ eta.T)[:, :, None] * A[None] * self._g(Zt)[:, None, :]
        else:
            U = self._direct_U(Xn, samples)
        T = self.model.half_solve(U.reshape(m * self.N, n).T)
        return T.reshape(n, m, self.N).transpose(1, 0, 2).reshape(m, n * self.N)

    def _kj_matrix(self, Xn):
        Zt = Xn / self.ls
        Zc = Zt - self.centre
        deta = self.eta - self.eta2
        reach = np.max(np.linalg.norm(Zc, axis=1)) * np.sqrt(np.max(np.sum(deta**2, axis=1)))
        if reach < _EXP_GUARD:
            # exp(-|za - zb + d|^2 / 2) = exp(-|za - zb|^2 / 2) exp(-za.d) exp(zb.d) exp(-|d|^2 / 2), centred
            w = np.exp(-0.5 * np.sum(deta**2, axis=1)) / self.N
            P = np.exp(-Zc @ deta.T)
            R = np.exp(Zc @ deta.T)
            sq = np.sum((Zt[:, None, :] - Zt[None, :, :]) ** 2, axis=-1)
            return self.s2 * np.exp(-0.5 * sq) * ((P * w) @ R.T)
        m = Xn.shape[0]
        kj = np.empty((m, m))
        for a in range(m):
            diff = (Zt[a] - Zt)[:, None, :] + deta[None, :, :]
            kj[a] = self.s2 * np.mean(np.exp(-0.5 * np.sum(diff**2, axis=-1)), axis=1)
        return kj

    def full_cov(self, Xn: np.ndarray) -> np.ndarray:
        """Un-repaired covariance matrix at the rows of ``Xn``."""
        m = Xn.shape[0]
        rows = max(1, _SOLVE_ROWS // self.N)
        TU = np.vstack([self._solved(Xn[s : s + rows], self.En) for s in range(0, m, rows)])
        TV = np.vstack([self._solved(Xn[s : s + rows], self.E2n) for s in range(0, m, rows)])
        return self._kj_matrix(Xn) - TU @ TV.T / self.N

    def mean_gradient(self, xn: np.ndarray) -> np.ndarray:
        """Gradient of the SAA posterior mean w.r.t. the normalized input."""
        shifted = (xn[None, :] + self.En) / self.ls
        delta = shifted[:, None, :] - self.Z[None, :, :]
        k = self.s2 * np.exp(-0.5 * np.sum(delta**2, axis=-1))
        dk = -k[:, :, None] * delta / self.ls
        return np.einsum("inp,n->p", dk, self.model.alpha) / self.N

    # -- conditioning on a fantasy point -------------------------------------
    def al_state(self, xs: np.ndarray):
        """Quantities at a pending point ``xs`` reused for every fantasy candidate."""
        U = self._direct_U(xs[None, :], self.En)[0]
        V = self._direct_U(xs[None, :], self.E2n)[0]
        TU, TV = self.model.half_solve(U.T), self.model.half_solve(V.T)
        before = max(self.kj_diag - float(np.mean(np.sum(TU * TV, axis=0))), 0.0)
        return xs, TU, TV, before

    def variance_after(self, state, Xc: np.ndarray) -> np.ndarray:
        """Variance of ``J(xs)`` after adding each row of ``Xc`` to the data.

        Uses a rank-one extension of the Cholesky factor; the observed value
        does not enter because the hyperparameters are held fixed.
        """
        xs, TU, TV, before = state
        model = self.model
        kx = kernel_eval(model.kernel, model.X_train, Xc)
        lvec = model.half_solve(kx)
        schur = np.maximum(self.s2 + model.jitter - np.sum(lvec**2, axis=0), model.jitter)
        ku = kernel_eval(model.kernel, xs[None, :] + self.En, Xc)
        kv = kernel_eval(model.kernel, xs[None, :] + self.E2n, Xc)
        cu = ku - TU.T @ lvec
        cv = kv - TV.T @ lvec
        return before - np.mean(cu * cv, axis=0) / schur


class RobustGp:
    """Posterior over the Bayes risk of each objective.

    Args:
        models: one fitted base GP per objective, all on the same input normalization.
        samples: frozen noise draws in original units.
        ke_mode: ``"saa_mc"`` or ``"analytic"`` (SE kernel with Gaussian noise only).
        noise: the noise distribution; required for analytic mode.
        shortcut_degenerate: when every noise draw is zero, J = f and the base
            GP posterior is returned directly (bit-identical to the non-robust model).
    """

    def __init__(self, models: list[GpModel], samples: FixedNoiseSamples, ke_mode: str = "saa_mc",
                 noise: NoiseDistribution | None = None, shortcut_degenerate: bool = True):
        if ke_mode not in ("saa_mc", "analytic"):
            raise ValueError(f"unknown ke_mode {ke_mode!r}")
        if ke_mode == "analytic" and not isinstance(noise, (Gaussian, NoNoise)):
            raise ValueError("analytic kernel expectations require Gaussian input noise")
        self.models = list(models)
        self.samples = samples
        self.ke_mode = ke_mode
        self.noise = noise
        scale = self.models[0].x_scale
        self._En = samples.E / scale
        self._E2n = samples.E2 / scale
        self._ke = [_ObjectiveKE(m, self._En, self._E2n) for m in self.models]
        self.degenerate = shortcut_degenerate and not (np.any(samples.E) or np.any(samples.E2))
        self._base = GpEnsemble(self.models)

    @property
    def n_objectives(self) -> int:
        return len(self.models)

    def normalize_x(self, X) -> np.ndarray:
        return self.models[0].normalize_x(X)

    # -- analytic kernel expectations ---------------------------------------
    def _noise_moments(self, model: GpModel):
        if isinstance(self.noise, NoNoise):
            return np.zeros(model.d), np.zeros(model.d)
        return self.noise.mean / model.x_scale, self.noise.std / model.x_scale

    def _analytic_cross(self, model: GpModel, Xn):
        mu, s = self._noise_moments(model)
        l2 = model.kernel.lengthscales**2
        var = l2 + s**2
        amp = model.kernel.variance * np.prod(np.sqrt(l2 / var))
        diff = (Xn + mu)[:, None, :] - model.X_train[None, :, :]
        return amp * np.exp(-0.5 * np.sum(diff**2 / var, axis=-1))

    def _analytic_kj(self, model: GpModel, Xa, Xb):
        _, s = self._noise_moments(model)
        l2 = model.kernel.lengthscales**2
        var = l2 + 2.0 * s**2
        amp = model.kernel.variance * np.prod(np.sqrt(l2 / var))
        diff = Xa[:, None, :] - Xb[None, :, :]
        return amp * np.exp(-0.5 * np.sum(diff**2 / var, axis=-1))

    def _analytic_posterior(self, model: GpModel, Xn, full_cov):
        kjf = self._analytic_cross(model, Xn)
        mean = kjf @ model.alpha
        v = model.half_solve(kjf.T)
        if full_cov:
            return mean, self._analytic_kj(model, Xn, Xn) - v.T @ v
        _, s = self._noise_moments(model)
        l2 = model.kernel.lengthscales**2
        prior = model.kernel.variance * np.prod(np.sqrt(l2 / (l2 + 2.0 * s**2)))
        return mean, np.maximum(prior - np.sum(v**2, axis=0), 0.0)

    # -- public API -----------------------------------------------------------
    def ke_cross(self, X, objective: int = 0) -> np.ndarray:
        """Kernel expectation ``k_Jf(x)`` against the training inputs, ``(m, n)``."""
        Xn = self.normalize_x(X)
        if self.ke_mode == "analytic":
            return self._analytic_cross(self.models[objective], Xn)
        return self._ke[objective].cross_mean(Xn)

    def posterior(self, X, full_cov: bool = False):
        """Mean ``(m, M)`` and variance ``(m, M)`` or repaired covariance ``(M, m, m)``."""
        if self.degenerate:
            return self._base.posterior(X, full_cov)
        Xn = self.normalize_x(X)
        means, spreads = [], []
        for model, ke in zip(self.models, self._ke):
            if self.ke_mode == "analytic":
                mean, spread = self._analytic_posterior(model, Xn, full_cov)
            else:
                mean = ke.cross_mean(Xn) @ model.alpha
                spread = ke.full_cov(Xn) if full_cov else ke.variance(Xn)
            if full_cov:
                spread = nearest_pd(spread)
            means.append(model.y_mean + model.y_std * mean)
            spreads.append(model.y_std**2 * spread)
        mean = np.stack(means, axis=-1)
        return (mean, np.stack(spreads)) if full_cov else (mean, np.stack(spreads, axis=-1))

    def mean(self, X) -> np.ndarray:
        if self.degenerate:
            return self._base.mean(X)
        if self.ke_mode == "analytic":
            return self.posterior(X)[0]
        Xn = self.normalize_x(X)
        cols = [m.y_mean + m.y_std * (ke.cross_mean(Xn) @ m.alpha) for m, ke in zip(self.models, self._ke)]
        return np.stack(cols, axis=-1)

    def batch_posterior(self, Xb: np.ndarray):
        """Joint posterior of each batch in ``Xb (m, q, d)``.

        Returns mean ``(m, q, M)`` and repaired covariances ``(m, M, q, q)``.
        """
        Xb = np.asarray(Xb, dtype=float)
        if self.degenerate:
            return self._base.batch_posterior(Xb)
        m, q, d = Xb.shape
        flat = self.normalize_x(Xb.reshape(m * q, d))
        mean = np.empty((m, q, self.n_objectives))
        cov = np.empty((m, self.n_objectives, q, q))
        ia, ib = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
        off = ia != ib
        for o, (model, ke) in enumerate(zip(self.models, self._ke)):
            mean[:, :, o] = (ke.cross_mean(flat) @ model.alpha).reshape(m, q)
            C = np.empty((m, q, q))
            C[:, np.arange(q), np.arange(q)] = ke.variance(flat).reshape(m, q)
            if q > 1:
                Xq = flat.reshape(m, q, d)
                A = Xq[:, ia[off], :].reshape(-1, d)
                B = Xq[:, ib[off], :].reshape(-1, d)
                C[:, ia[off], ib[off]] = ke.paired_cov(A, B).reshape(m, -1)
            for r in range(m):
                C[r] = nearest_pd(C[r])
            mean[:, :, o] = model.y_mean + model.y_std * mean[:, :, o]
            cov[:, o] = model.y_std**2 * C
        return mean, cov

    def mean_gradient(self, x) -> np.ndarray:
        """Gradient of each objective's posterior mean at one point, ``(M, d)``."""
        xn = self.normalize_x(x)[0]
        grads = []
        for model, ke in zip(self.models, self._ke):
            grads.append(model.y_std * ke.mean_gradient(xn) / model.x_scale)
        return np.stack(grads)

    def al_states(self, x_star):
        xs = self.normalize_x(x_star)[0]
        return [ke.al_state(xs) for ke in self._ke]

    def variance_after(self, states, X_cand):
        """Per-objective variance at the pending point before ``(M,)`` and after adding each candidate ``(m, M)``."""
        Xc = self.normalize_x(X_cand)
        before = np.array([m.y_std**2 * st[3] for m, st in zip(self.models, states)])
        after = [m.y_std**2 * ke.variance_after(st, Xc) for m, ke, st in zip(self.models, self._ke, states)]
        return before, np.stack(after, axis=-1)


def ke_cross(rgp: RobustGp, X_test, objective: int = 0) -> np.ndarray:
    return rgp.ke_cross(X_test, objective)


def robust_posterior(rgp: RobustGp, X_test, full_cov: bool = False):
    return rgp.posterior(X_test, full_cov)


def nearest_pd(C: np.ndarray) -> np.ndarray:
    """Nearest positive-definite matrix in the Frobenius sense, plus a minimal nugget.

    The symmetric part is projected onto the PSD cone by zeroing negative
    eigenvalues; a nugget ``1e-10 * 2**k * trace(C) / m`` is then added for the
    smallest ``k`` that lets the Cholesky factorization succeed.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("nearest_pd expects a square matrix")
    if not np.all(np.isfinite(C)):
        raise ValueError("matrix has non-finite entries")
    m = C.shape[0]
    B = 0.5 * (C + C.T)
    try:
        np.linalg.cholesky(B)
        return B
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(B)
    P = (V * np.maximum(w, 0.0)) @ V.T
    P = 0.5 * (P + P.T)
    # trace of the projection equals trace(C) for PSD input and stays positive otherwise
    base = 1e-10 * np.trace(P) / m
    if not base > 0:
        base = 1e-10
    eye = np.eye(m)
    for k in range(1100):
        try:
            candidate = P if k == 0 else P + base * 2.0 ** (k - 1) * eye
            np.linalg.cholesky(candidate)
            return candidate
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("nearest_pd could not reach a positive-definite matrix")
