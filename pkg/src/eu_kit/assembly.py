"""Expected utility U(x) = sum_s a_s u(x0, x_s) and the diagonal restriction back to u.

Points of U are flat arrays of length G = C(S+1): the x0 block first, then the
state bundles in ascending order. Everything is batched over a leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockarrow import BlockArrowHessian
from .core import Dimensions, ProbabilityWeights, VnmOracle, _as_batch, _require_positive
from .errors import DimensionError

__all__ = ["ExpectedUtility", "RestrictedUtility", "diagonal_embedding"]


@dataclass(frozen=True)
class ExpectedUtility:
    vnm: VnmOracle
    weights: ProbabilityWeights
    dims: Dimensions

    def __post_init__(self):
        if len(self.weights) != self.dims.states:
            raise DimensionError(f"{len(self.weights)} weights for {self.dims.states} states")
        if self.vnm.commodities != self.dims.commodities:
            raise DimensionError(
                f"vNM utility has C={self.vnm.commodities}, dimensions say C={self.dims.commodities}"
            )

    @property
    def ndim(self) -> int:
        return self.dims.total

    @property
    def provenance(self) -> str:
        return self.vnm.provenance

    def _pairs(self, X):
        """All (x0, x_s) pairs as an (n*S, 2C) batch."""
        C, S = self.dims.commodities, self.dims.states
        blocks = X.reshape(len(X), S + 1, C)
        x0 = np.broadcast_to(blocks[:, :1, :], (len(X), S, C))
        return np.concatenate([x0, blocks[:, 1:, :]], axis=2).reshape(-1, 2 * C)

    def _batch(self, x):
        X, single = _as_batch(x, self.ndim)
        _require_positive(X)
        return X, single

    def value(self, x):
        X, single = self._batch(x)
        S = self.dims.states
        u = self.vnm.value(self._pairs(X)).reshape(len(X), S)
        a = self.weights.weights
        out = np.zeros(len(X))
        for s in range(S):
            out += a[s] * u[:, s]
        return out[0] if single else out

    def gradient(self, x):
        """``(sum_s a_s D_x0 u(x0,x_s) | a_1 D_x1 u(x0,x1) | ... | a_S D_xS u(x0,x_S))``."""
        X, single = self._batch(x)
        C, S = self.dims.commodities, self.dims.states
        g = self.vnm.gradient(self._pairs(X)).reshape(len(X), S, 2 * C)
        a = self.weights.weights
        out = np.empty((len(X), S + 1, C))
        acc = np.zeros((len(X), C))
        for s in range(S):
            acc += a[s] * g[:, s, :C]
        out[:, 0] = acc
        out[:, 1:] = a[None, :, None] * g[:, :, C:]
        out = out.reshape(len(X), self.ndim)
        return out[0] if single else out

    def hessian_blocks(self, x):
        """Arrow blocks ``(A0, B, D)`` with shapes (n,C,C), (n,S,C,C), (n,S,C,C)."""
        X, _ = self._batch(x)
        C, S = self.dims.commodities, self.dims.states
        H = self.vnm.hessian(self._pairs(X)).reshape(len(X), S, 2 * C, 2 * C)
        a = self.weights.weights
        corner = np.zeros((len(X), C, C))
        for s in range(S):
            corner += a[s] * H[:, s, :C, :C]
        arms = a[None, :, None, None] * H[:, :, :C, C:]
        diags = a[None, :, None, None] * H[:, :, C:, C:]
        return corner, arms, diags

    def hessian(self, x) -> BlockArrowHessian | list[BlockArrowHessian]:
        X, single = self._batch(x)
        corner, arms, diags = self.hessian_blocks(X)
        out = [BlockArrowHessian(corner[i], arms[i], diags[i], self.dims) for i in range(len(X))]
        return out[0] if single else out

    def dense_hessian(self, x):
        X, single = self._batch(x)
        corner, arms, diags = self.hessian_blocks(X)
        n = len(X)
        C, S = self.dims.commodities, self.dims.states
        blocks = np.zeros((n, S + 1, S + 1, C, C))
        idx = np.arange(1, S + 1)
        blocks[:, 0, 0] = corner
        blocks[:, 0, 1:] = arms
        blocks[:, 1:, 0] = np.swapaxes(arms, 2, 3)
        blocks[:, idx, idx] = diags
        H = blocks.transpose(0, 1, 3, 2, 4).reshape(n, self.ndim, self.ndim)
        return H[0] if single else H

    def arrow_hessians(self, X) -> list[BlockArrowHessian]:
        corner, arms, diags = self.hessian_blocks(X)
        return [BlockArrowHessian(corner[i], arms[i], diags[i], self.dims) for i in range(len(corner))]


def diagonal_embedding(X, dims: Dimensions) -> np.ndarray:
    """``(x, y) -> (x, y, ..., y)`` for an (n, 2C) batch."""
    C, S = dims.commodities, dims.states
    X = np.atleast_2d(X)
    return np.concatenate([X[:, :C], np.tile(X[:, C:], (1, S))], axis=1)


@dataclass(frozen=True)
class RestrictedUtility:
    """u recovered from any G-dimensional utility via ``u(x, y) = U(x, y, ..., y)``.

    ``source`` needs batched ``value`` and ``gradient`` and either
    ``dense_hessian`` or a ``hessian`` returning dense matrices.
    """

    source: object
    dims: Dimensions

    @property
    def commodities(self) -> int:
        return self.dims.commodities

    @property
    def ndim(self) -> int:
        return 2 * self.dims.commodities

    @property
    def provenance(self) -> str:
        return getattr(self.source, "provenance", "analytic")

    def _embed(self, x):
        X, single = _as_batch(x, self.ndim)
        _require_positive(X)
        return diagonal_embedding(X, self.dims), single

    def value(self, x):
        E, single = self._embed(x)
        out = np.asarray(self.source.value(E), dtype=float).reshape(len(E))
        return out[0] if single else out

    def gradient(self, x):
        """``(D_x0 U, D_x1 U + ... + D_xS U)`` at the diagonal point."""
        E, single = self._embed(x)
        C, S = self.dims.commodities, self.dims.states
        g = np.asarray(self.source.gradient(E), dtype=float).reshape(len(E), S + 1, C)
        acc = np.zeros((len(E), C))
        for s in range(1, S + 1):
            acc += g[:, s]
        out = np.concatenate([g[:, 0], acc], axis=1)
        return out[0] if single else out

    def hessian(self, x):
        """Corner ``D2_{x0,x0} U``, arm ``sum_s D2_{x0,xs} U``, bottom ``sum_{i,j} D2_{xi,xj} U``."""
        E, single = self._embed(x)
        C, S = self.dims.commodities, self.dims.states
        dense = getattr(self.source, "dense_hessian", None) or self.source.hessian
        H = np.asarray(dense(E), dtype=float).reshape(len(E), S + 1, C, S + 1, C)
        top = H[:, 0, :, 0, :]
        arm = np.zeros((len(E), C, C))
        bottom = np.zeros((len(E), C, C))
        for s in range(1, S + 1):
            arm += H[:, 0, :, s, :]
            for t in range(1, S + 1):
                bottom += H[:, s, :, t, :]
        out = np.empty((len(E), 2 * C, 2 * C))
        out[:, :C, :C] = top
        out[:, :C, C:] = arm
        out[:, C:, :C] = np.swapaxes(arm, 1, 2)
        out[:, C:, C:] = bottom
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out
