"""Built-in site laws used by the experiments and the acceptance suite.

The ballistic laws all drift in +e_1.  Genuinely random (two-atom) laws
exist in d = 2 and d = 3; the d = 5 workhorse is homogeneous with drift
0.2 e_1 so its velocity is known exactly.
"""

from __future__ import annotations

from .env_model import SiteLaw, make_law


def d1_symmetric() -> SiteLaw:
    return make_law(1, 0.5, [(1.0, (0.5, 0.5))])


def d1_drift(p_right: float = 0.6) -> SiteLaw:
    return make_law(1, min(p_right, 1 - p_right), [(1.0, (p_right, 1 - p_right))])


def d2_random() -> SiteLaw:
    """Two-atom d=2 law, mean drift 0.29 e_1, floor 0.10."""
    return make_law(2, 0.10, [
        (0.5, (0.45, 0.10, 0.225, 0.225)),
        (0.5, (0.35, 0.12, 0.265, 0.265)),
    ])


def d3_random() -> SiteLaw:
    """Two-atom d=3 law, mean drift 0.34 e_1, floor 0.10."""
    return make_law(3, 0.10, [
        (0.5, (0.50, 0.10, 0.10, 0.10, 0.10, 0.10)),
        (0.5, (0.38, 0.10, 0.13, 0.13, 0.13, 0.13)),
    ])


def d5_homogeneous() -> SiteLaw:
    """Homogeneous d=5 law: p(+e_1) = 0.28, every other move 0.08; drift 0.2 e_1."""
    return make_law(5, 0.08, [(1.0, (0.28,) + (0.08,) * 9)])


def d5_random() -> SiteLaw:
    """Two-atom d=5 law, mean drift 0.2 e_1, floor 0.06."""
    return make_law(5, 0.06, [
        (0.5, (0.30, 0.10) + (0.075,) * 8),
        (0.5, (0.26, 0.06) + (0.085,) * 8),
    ])


def d5_fast() -> SiteLaw:
    """Homogeneous d=5 law with strong drift (0.56 e_1), floor 0.044.

    Slabs are short and their displacement law tightly spread, which puts
    the Gaussian-bulk decay window of n-fold sums inside desk-scale reach.
    """
    return make_law(5, 0.044, [(1.0, (0.60, 0.044) + (0.0445,) * 8)])


def deterministic_right(d: int = 1) -> SiteLaw:
    """Point mass on +e_1 (epsilon = 0); degenerate but valid."""
    probs = (1.0,) + (0.0,) * (2 * d - 1)
    return make_law(d, 0.0, [(1.0, probs)])


def oracle_fleet() -> dict[str, SiteLaw]:
    """Laws exercised against the exact enumeration oracle."""
    return {
        "d1_symmetric": d1_symmetric(),
        "d1_drift": d1_drift(),
        "d2_random": d2_random(),
        "d3_random": d3_random(),
        "d5_homogeneous": d5_homogeneous(),
    }
