"""Branched compartment trees and asymmetric axial coupling coefficients.

Compartments are cylinders in strict SI units. Couplings use the one-sided
convention: a compartment's coupling toward its parent uses its own radius,
the parent's coupling toward that child uses the child's radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import CycleDetected, DanglingParent, MultipleRoots

#: Default electrical constants (SI). Overridable per compartment.
DEFAULT_CM = 0.01       # F/m^2
DEFAULT_RM = 1.0 / 3.0  # ohm*m^2
DEFAULT_RL = 1.0        # ohm*m
DEFAULT_EL = -0.07      # V


@dataclass(frozen=True)
class Compartment:
    """One membrane cylinder: geometry plus specific electrical constants."""

    id: int
    parent: Optional[int]
    radius: float            # a, meters
    length: float            # h, meters
    c_m: float = DEFAULT_CM  # specific membrane capacitance, F/m^2
    r_m: float = DEFAULT_RM  # specific membrane resistance, ohm*m^2
    r_L: float = DEFAULT_RL  # specific axial resistance, ohm*m
    E_L: float = DEFAULT_EL  # leak reversal, V

    def __post_init__(self):
        for name in ("radius", "length", "c_m", "r_m", "r_L"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"compartment {self.id}: {name} must be > 0")

    @property
    def membrane_area(self) -> float:
        """Lateral cylinder area, m^2."""
        return 2.0 * math.pi * self.radius * self.length

    @property
    def capacitance(self) -> float:
        """Absolute membrane capacitance C_m, farads."""
        return self.c_m * self.membrane_area


@dataclass(frozen=True)
class MorphologyTree:
    """Validated compartment tree, immutable and shareable."""

    compartments: tuple
    children: dict = field(compare=False)

    @property
    def n(self) -> int:
        return len(self.compartments)

    @property
    def ids(self):
        return [c.id for c in self.compartments]

    def index_of(self, compartment_id: int) -> int:
        return self._index[compartment_id]

    def compartment(self, compartment_id: int) -> Compartment:
        return self.compartments[self._index[compartment_id]]

    @property
    def root(self) -> Compartment:
        return next(c for c in self.compartments if c.parent is None)

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {c.id: i for i, c in enumerate(self.compartments)})


@dataclass(frozen=True)
class AxialCoupling:
    """Per-compartment diffusion coefficients, 1/(R_a C_m) form.

    c1 couples toward the parent (0 for the root), c2_list holds one entry per
    child in increasing child-id order. All entries have units 1/s.
    """

    compartment_id: int
    c1: float
    c2_list: tuple
    C_m: float  # absolute capacitance, farads


def build_tree(compartment_descriptions) -> MorphologyTree:
    """Validate descriptions and assemble a MorphologyTree.

    Accepts Compartment instances or mappings with the same field names.
    Raises CycleDetected, MultipleRoots or DanglingParent naming the
    offending compartment.
    """
    comps = []
    for desc in compartment_descriptions:
        if isinstance(desc, Compartment):
            comps.append(desc)
        else:
            kwargs = dict(desc)
            comps.append(Compartment(**kwargs))
    if not comps:
        raise ValueError("no compartments given")

    comps.sort(key=lambda c: c.id)
    ids = [c.id for c in comps]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate compartment id {dup}")

    id_set = set(ids)
    roots = [c.id for c in comps if c.parent is None]
    if len(roots) > 1:
        raise MultipleRoots(roots)

    children = {c.id: [] for c in comps}
    for c in comps:
        if c.parent is None:
            continue
        if c.parent == c.id:
            raise CycleDetected(c.id)
        if c.parent not in id_set:
            raise DanglingParent(c.id, c.parent)
        if c.parent > c.id:
            # Topological order is an invariant; a violation is the only way
            # parent links could close a cycle.
            raise CycleDetected(c.id)
        children[c.parent].append(c.id)

    if not roots:
        # Unreachable given the order check above, kept defensively.
        raise CycleDetected(comps[0].id)

    for v in children.values():
        v.sort()
    return MorphologyTree(compartments=tuple(comps), children=children)


def _coupling(upstream: Compartment, radius_numerator: float) -> float:
    """(a'^2 / a) / (2 r_L c_m h^2) evaluated with `upstream`'s constants."""
    return (radius_numerator ** 2 / upstream.radius) / (
        2.0 * upstream.r_L * upstream.c_m * upstream.length ** 2)


def axial_couplings(tree: MorphologyTree) -> list:
    """Compute c1/c2 couplings and absolute capacitance per compartment.

    c1 of compartment j uses j's own radius (a^2/a = a); the entry of the
    parent's c2_list for child q uses q's radius. Doubling h divides every
    coupling by 4.
    """
    out = []
    for comp in tree.compartments:
        c1 = 0.0 if comp.parent is None else _coupling(comp, comp.radius)
        c2 = tuple(_coupling(comp, tree.compartment(q).radius)
                   for q in tree.children[comp.id])
        out.append(AxialCoupling(compartment_id=comp.id, c1=c1, c2_list=c2,
                                 C_m=comp.capacitance))
    return out


def _depth_chain(tree: MorphologyTree, start: int) -> list:
    """Deepest chain from `start` downward; ties broken by smaller child id."""
    best = [start]
    for child in tree.children[start]:
        cand = [start] + _depth_chain(tree, child)
        if len(cand) > len(best):
            best = cand
    return best


def default_theta_path(tree: MorphologyTree) -> list:
    """Tip-to-tip compartment-id path through the root.

    Concatenates the two deepest root-to-leaf chains from distinct child
    subtrees (deepest-first), falling back to a single chain for unbranched
    roots. Used as the plane-wave sampling path for the spectral centroid.
    """
    root = tree.root
    chains = sorted((_depth_chain(tree, child) for child in tree.children[root.id]),
                    key=lambda ch: (-len(ch), ch[0]))
    if not chains:
        return [root.id]
    if len(chains) == 1:
        return [root.id] + chains[0]
    first = list(reversed(chains[0]))
    return first + [root.id] + chains[1]
