"""Polynomial generating frames and the derivative blocks of their Hamiltonian.

Every supported structure is realized as m polynomial vector fields on R^n
(degree ≤ 3), so all derivatives needed by the variational flow are exact:

  H(q, p)   = ½ Σ_i h_i²,   h_i = ⟨p, X_i(q)⟩
  ∂H/∂p     = Σ_i h_i X_i
  ∂H/∂q     = Σ_i h_i DX_iᵀ p
  B = H_pp  = Σ_i X_i X_iᵀ
  A = H_qp  = transpose of  Σ_i X_i (DX_iᵀp)ᵀ + h_i DX_i
  R = H_qq  = Σ_i (DX_iᵀp)(DX_iᵀp)ᵀ + h_i Σ_a p_a ∇²X_i^a

All methods take batched coordinates of shape (B, n).
"""

from typing import Sequence

import numpy as np

from models import Polynomial


class PolynomialFrame:
    """m vector fields on R^n with polynomial components, plus a polynomial density."""

    def __init__(
        self,
        dim: int,
        fields: Sequence[Sequence[Polynomial]],
        density: Polynomial = (),
    ) -> None:
        self.dim = dim
        self.rank = len(fields)

        exps: dict[tuple[int, ...], int] = {}
        for fld in fields:
            for comp in fld:
                for _, e in comp:
                    exps.setdefault(tuple(e), len(exps))
        if not exps:
            exps[(0,) * dim] = 0
        self.exponents = np.array(list(exps), dtype=np.int64).reshape(len(exps), dim)

        self.coeffs = np.zeros((self.rank, dim, len(exps)))
        for i, fld in enumerate(fields):
            for a, comp in enumerate(fld):
                for c, e in comp:
                    self.coeffs[i, a, exps[tuple(e)]] += c

        self._density = tuple(density)
        self._grad_tables = [self._reduce(self.exponents, b) for b in range(dim)]
        self._hess_tables = [
            [self._reduce(self._grad_tables[b][1], c, self._grad_tables[b][0]) for c in range(dim)]
            for b in range(dim)
        ]
        self.is_linear = bool(np.all(self.exponents.sum(axis=1) <= 1))

    @staticmethod
    def _reduce(E: np.ndarray, b: int, factor: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Differentiate monomials q^E once in q_b: returns (factor, reduced exponents)."""
        f = E[:, b].astype(float)
        if factor is not None:
            f = f * factor
        reduced = E.copy()
        reduced[:, b] = np.maximum(reduced[:, b] - 1, 0)
        return f, reduced

    @staticmethod
    def _mono(Q: np.ndarray, E: np.ndarray) -> np.ndarray:
        return np.prod(Q[:, None, :] ** E[None, :, :], axis=2)

    # ── evaluation ────────────────────────────────────────────────────────────

    def fields(self, Q: np.ndarray) -> np.ndarray:
        """X[b, i, a] = a-th component of X_i at Q[b]."""
        mono = self._mono(Q, self.exponents)
        return np.einsum("iat,bt->bia", self.coeffs, mono)

    def jacobians(self, Q: np.ndarray) -> np.ndarray:
        """DX[b, i, a, c] = ∂X_i^a/∂q_c."""
        grad = np.stack([f * self._mono(Q, E) for f, E in self._grad_tables], axis=2)
        return np.einsum("iat,btc->biac", self.coeffs, grad)

    def hessians(self, Q: np.ndarray) -> np.ndarray:
        """D2X[b, i, a, c, d] = ∂²X_i^a/∂q_c∂q_d."""
        n = self.dim
        if self.is_linear:
            return np.zeros((Q.shape[0], self.rank, n, n, n))
        hess = np.empty((Q.shape[0], self.exponents.shape[0], n, n))
        for c in range(n):
            for d in range(n):
                f, E = self._hess_tables[c][d]
                hess[:, :, c, d] = f * self._mono(Q, E)
        return np.einsum("iat,btcd->biacd", self.coeffs, hess)

    def density(self, Q: np.ndarray) -> np.ndarray:
        if not self._density:
            return np.ones(Q.shape[0])
        out = np.zeros(Q.shape[0])
        for c, e in self._density:
            out += c * np.prod(Q ** np.asarray(e)[None, :], axis=1)
        return out

    # ── Hamiltonian ───────────────────────────────────────────────────────────

    def hamiltonian(self, Q: np.ndarray, P: np.ndarray) -> np.ndarray:
        h = np.einsum("bia,ba->bi", self.fields(Q), P)
        return 0.5 * np.sum(h * h, axis=1)

    def hamilton_rhs(self, Q: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(∂H/∂p, −∂H/∂q)."""
        X = self.fields(Q)
        h = np.einsum("bia,ba->bi", X, P)
        G = np.einsum("ba,biac->bic", P, self.jacobians(Q))
        dq = np.einsum("bi,bia->ba", h, X)
        dp = -np.einsum("bi,bic->bc", h, G)
        return dq, dp

    def blocks(self, Q: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, ...]:
        """(dq, dp, A, B, R) at a batch of states; A = H_qp, B = H_pp, R = H_qq."""
        X = self.fields(Q)
        DX = self.jacobians(Q)
        h = np.einsum("bia,ba->bi", X, P)
        G = np.einsum("ba,biac->bic", P, DX)

        dq = np.einsum("bi,bia->ba", h, X)
        dp = -np.einsum("bi,bic->bc", h, G)

        B = np.einsum("bia,bic->bac", X, X)
        H_pq = np.einsum("bia,bic->bac", X, G) + np.einsum("bi,biac->bac", h, DX)
        R = np.einsum("bic,bid->bcd", G, G)
        if not self.is_linear:
            R = R + np.einsum("bi,ba,biacd->bcd", h, P, self.hessians(Q))
        A = np.swapaxes(H_pq, 1, 2)
        return dq, dp, A, B, R
