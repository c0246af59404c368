"""Fixed Gauss-Legendre rules for integrals against a Levy density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LevyMeasureSpec


@dataclass(frozen=True)
class ZQuadrature:
    """Nodes and weights such that ``sum(w * g(nodes)) ~= int g(z) kappa(z) dz``.

    The support is split at 0 and at |z| = 1 (kinks of ``1 ^ z^2`` and of the
    indicator in the weight kernel); the ``node_count`` budget is shared
    evenly between pieces (at least 8 per piece).  All nodes lie strictly
    inside the support.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_measure(cls, measure: LevyMeasureSpec, node_count: int = 64) -> "ZQuadrature":
        if measure.total_intensity == 0.0:
            return cls(nodes=np.empty(0), weights=np.empty(0))
        pieces = measure.pieces()
        ref_x, ref_w = np.polynomial.legendre.leggauss(max(node_count // len(pieces), 8))
        nodes, weights = [], []
        for lo, hi in pieces:
            half = 0.5 * (hi - lo)
            z = lo + half * (ref_x + 1.0)
            nodes.append(z)
            weights.append(half * ref_w * measure.density(z))
        return cls(nodes=np.concatenate(nodes), weights=np.concatenate(weights))

    @property
    def node_count(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the trailing node axis of ``values`` against the weights."""
        if self.nodes.size == 0:
            return np.zeros(np.shape(values)[:-1])
        return values @ self.weights
