"""Conditional abstraction trees over factored state spaces.

A tree node holds one axis-aligned box (one interval per state variable).
Leaves partition the full variable ranges; refining a leaf replaces it with
f children that split one interval into f contiguous pieces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

INTEGER = "integer"
REAL = "real"

STRICTLY_FINER = "strictly_finer"
FINER = "finer"
NOT_FINER = "not_finer"

# width-ratio tolerance for real intervals in is_direct_refinement
_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class VariableSpec:
    """Global value range of one state variable."""

    name: str
    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in (INTEGER, REAL):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == INTEGER:
            if self.lo != int(self.lo) or self.hi != int(self.hi):
                raise ValueError(f"integer variable {self.name!r} needs integral bounds")
            if self.lo > self.hi:
                raise ValueError(f"variable {self.name!r} has lo > hi")
        else:
            if not self.lo < self.hi:
                raise ValueError(f"real variable {self.name!r} needs lo < hi")


@dataclass(frozen=True)
class Interval:
    """One variable's value range inside an abstraction.

    Integer intervals are closed [lo, hi]. Real intervals are half-open
    [lo, hi), except that an interval ending at the variable's global upper
    bound is closed there, so every in-range point belongs to exactly one
    leaf.
    """

    lo: float
    hi: float
    kind: str

    def __post_init__(self):
        if self.kind == INTEGER:
            if self.lo != int(self.lo) or self.hi != int(self.hi) or self.lo > self.hi:
                raise ValueError(f"bad integer interval [{self.lo}, {self.hi}]")
        elif self.kind == REAL:
            if not self.lo < self.hi:
                raise ValueError(f"bad real interval [{self.lo}, {self.hi})")
        else:
            raise ValueError(f"unknown interval kind {self.kind!r}")

    @property
    def width(self) -> float:
        if self.kind == INTEGER:
            return self.hi - self.lo + 1
        return self.hi - self.lo

    def contains(self, v: float, global_hi: float) -> bool:
        if self.kind == INTEGER:
            return self.lo <= v <= self.hi
        if self.lo <= v < self.hi:
            return True
        return self.hi == global_hi and v == self.hi

    def subset_of(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi


@dataclass(frozen=True)
class Abstraction:
    """One interval per state variable; the payload of a tree node."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("abstraction needs at least one interval")

    def __len__(self) -> int:
        return len(self.intervals)

    def contains(self, state, specs) -> bool:
        if len(state) != len(self.intervals):
            raise ValueError(f"state has {len(state)} components, expected {len(self.intervals)}")
        return all(
            itv.contains(v, spec.hi)
            for itv, v, spec in zip(self.intervals, state, specs)
        )


def is_splittable(interval: Interval, f: int, min_real_width: float) -> bool:
    if interval.kind == INTEGER:
        return interval.width >= f
    return interval.width >= f * min_real_width


def f_split(theta: Abstraction, i: int, f: int, min_real_width: float = 1.0) -> list[Abstraction]:
    """Split interval i of `theta` into f contiguous pieces.

    Integer boundaries fall at lo + x*floor((hi-lo)/f); when the floor
    collapses boundaries they are pushed one apart, so narrow intervals
    degrade to unit-width cells rather than empty ones.
    """
    if f < 2:
        raise ValueError(f"split factor must be >= 2, got {f}")
    if not 0 <= i < len(theta):
        raise ValueError(f"variable index {i} out of range for {len(theta)} variables")
    itv = theta.intervals[i]
    if not is_splittable(itv, f, min_real_width):
        raise ValueError(
            f"interval [{itv.lo}, {itv.hi}] of width {itv.width} cannot be split into {f} parts"
        )

    if itv.kind == INTEGER:
        lo, hi = int(itv.lo), int(itv.hi)
        step = (hi - lo) // f
        bounds = []
        prev = lo - 1
        for x in range(1, f):
            b = max(lo + x * step, prev + 1)
            bounds.append(b)
            prev = b
        edges = [lo] + [b + 1 for b in bounds] + [hi + 1]
        pieces = [Interval(edges[j], edges[j + 1] - 1, INTEGER) for j in range(f)]
    else:
        cuts = [itv.lo + j * (itv.hi - itv.lo) / f for j in range(f + 1)]
        cuts[0], cuts[-1] = itv.lo, itv.hi
        pieces = [Interval(cuts[j], cuts[j + 1], REAL) for j in range(f)]

    out = []
    for piece in pieces:
        ivs = list(theta.intervals)
        ivs[i] = piece
        out.append(Abstraction(tuple(ivs)))
    return out


def is_refinement(theta_b: Abstraction, theta_a: Abstraction) -> bool:
    """Component-wise containment: every interval of b lies within a's."""
    if len(theta_b) != len(theta_a):
        raise ValueError("dimension mismatch")
    return all(b.subset_of(a) for b, a in zip(theta_b.intervals, theta_a.intervals))


def is_direct_refinement(theta_b: Abstraction, theta_a: Abstraction, f: int) -> bool:
    """True iff exactly one interval of b strictly shrinks, to one of the f
    pieces a split by f would produce.

    Piece membership, rather than an exact width*f == width check, keeps the
    relation true for integer splits where f does not divide the width and
    the pieces come out unequal.
    """
    if len(theta_b) != len(theta_a):
        raise ValueError("dimension mismatch")
    if f < 2:
        raise ValueError("split factor must be >= 2")
    shrunk = None
    for idx, (b, a) in enumerate(zip(theta_b.intervals, theta_a.intervals)):
        if b == a:
            continue
        if not b.subset_of(a):
            return False
        if shrunk is not None:
            return False
        shrunk = idx
    if shrunk is None:
        return False
    b, a = theta_b.intervals[shrunk], theta_a.intervals[shrunk]
    if a.kind == INTEGER and a.width < f:
        return False
    pieces = [p.intervals[shrunk] for p in f_split(theta_a, shrunk, f, min_real_width=0.0)]
    if b.kind == INTEGER:
        return b in pieces
    return any(
        math.isclose(b.lo, p.lo, rel_tol=_RATIO_TOL, abs_tol=_RATIO_TOL)
        and math.isclose(b.hi, p.hi, rel_tol=_RATIO_TOL, abs_tol=_RATIO_TOL)
        for p in pieces
    )


@dataclass
class CatNode:
    id: int
    abstraction: Abstraction
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    split_var: int | None = None
    split_factor: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


class Cat:
    """Conditional abstraction tree: node arena, root, live leaf set.

    Node ids are arena indices and are never reused, so Q-tables can keep
    keying on them across refinements.
    """

    def __init__(self, specs, min_real_width: float = 1.0):
        specs = list(specs)
        if not specs:
            raise ValueError("at least one variable spec required")
        self.specs = specs
        self.min_real_width = min_real_width
        root_theta = Abstraction(tuple(Interval(s.lo, s.hi, s.kind) for s in specs))
        self.nodes: list[CatNode] = [CatNode(0, root_theta)]
        self.root = 0
        self.leaves: set[int] = {0}

    @property
    def n_vars(self) -> int:
        return len(self.specs)

    def node(self, node_id: int) -> CatNode:
        return self.nodes[node_id]

    def find_abstract(self, state) -> int:
        """Map a concrete state to the id of the unique leaf containing it."""
        if len(state) != self.n_vars:
            raise ValueError(f"state has {len(state)} components, expected {self.n_vars}")
        node = self.nodes[self.root]
        if not node.abstraction.contains(state, self.specs):
            raise ValueError(f"state {state!r} outside the root box")
        while not node.is_leaf:
            for cid in node.children:
                child = self.nodes[cid]
                if child.abstraction.contains(state, self.specs):
                    node = child
                    break
            else:
                raise AssertionError("children do not cover parent; tree corrupt")
        return node.id

    def refine_leaf(self, leaf: int, i: int, f: int) -> list[int]:
        """Replace a leaf with f children split on variable i; returns new ids."""
        node = self.nodes[leaf]
        if not node.is_leaf:
            raise ValueError(f"node {leaf} is not a leaf")
        pieces = f_split(node.abstraction, i, f, self.min_real_width)
        new_ids = []
        for theta in pieces:
            cid = len(self.nodes)
            self.nodes.append(CatNode(cid, theta, parent=leaf))
            node.children.append(cid)
            new_ids.append(cid)
        node.split_var = i
        node.split_factor = f
        self.leaves.discard(leaf)
        self.leaves.update(new_ids)
        return new_ids

    def leaf_abstractions(self) -> list[Abstraction]:
        return [self.nodes[lid].abstraction for lid in sorted(self.leaves)]


def make_cat(specs, min_real_width: float = 1.0) -> Cat:
    return Cat(specs, min_real_width)


def compare_fineness(cat_a: Cat, cat_b: Cat) -> str:
    """Leaf-wise fineness ordering of cat_a relative to cat_b.

    finer: every leaf of a is contained in some leaf of b. strictly_finer:
    finer and at least one leaf of a is a proper subset of its container
    (equivalently the leaf sets differ).
    """
    if cat_a.specs != cat_b.specs:
        raise ValueError("cats are over different variable specs")
    leaves_b = cat_b.leaf_abstractions()
    any_proper = False
    for theta_a in cat_a.leaf_abstractions():
        container = None
        for theta_b in leaves_b:
            if is_refinement(theta_a, theta_b):
                container = theta_b
                break
        if container is None:
            return NOT_FINER
        if theta_a != container:
            any_proper = True
    return STRICTLY_FINER if any_proper else FINER


def serialize_cat(cat: Cat) -> str:
    """Render a cat as a JSON document (see README for the schema)."""
    doc = {
        "specs": [
            {"name": s.name, "kind": s.kind, "lo": s.lo, "hi": s.hi} for s in cat.specs
        ],
        "min_real_width": cat.min_real_width,
        "root": cat.root,
        "nodes": [
            {
                "id": n.id,
                "intervals": [[itv.lo, itv.hi] for itv in n.abstraction.intervals],
                "parent": n.parent,
                "split_var": n.split_var,
                "split_factor": n.split_factor,
            }
            for n in cat.nodes
        ],
    }
    return json.dumps(doc, indent=2)


def deserialize_cat(text: str) -> Cat:
    """Parse and validate a cat document; rejects trees whose leaves do not
    partition the root box."""
    try:
        doc = json.loads(text)
        specs = [VariableSpec(s["name"], s["kind"], s["lo"], s["hi"]) for s in doc["specs"]]
        mrw = doc["min_real_width"]
        raw_nodes = doc["nodes"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed cat document: {exc}") from exc

    cat = Cat(specs, mrw)
    if not raw_nodes or doc.get("root") != 0:
        raise ValueError("cat document must have node 0 as root")

    nodes = []
    for idx, raw in enumerate(raw_nodes):
        if raw["id"] != idx:
            raise ValueError(f"node ids must be dense arena indices; got {raw['id']} at {idx}")
        theta = Abstraction(
            tuple(Interval(lo, hi, spec.kind) for (lo, hi), spec in zip(raw["intervals"], specs))
        )
        nodes.append(
            CatNode(idx, theta, parent=raw["parent"],
                    split_var=raw["split_var"], split_factor=raw["split_factor"])
        )
    for n in nodes:
        if n.parent is not None:
            nodes[n.parent].children.append(n.id)

    if nodes[0].parent is not None:
        raise ValueError("root must have no parent")
    if nodes[0].abstraction != cat.nodes[0].abstraction:
        raise ValueError("root abstraction does not span the variable ranges")

    # every internal node's children must be exactly the recorded f-split;
    # this implies the leaves partition the root box
    for n in nodes:
        if n.is_leaf:
            continue
        if n.split_var is None or n.split_factor is None:
            raise ValueError(f"internal node {n.id} missing split metadata")
        expected = f_split(n.abstraction, n.split_var, n.split_factor, mrw)
        got = [nodes[c].abstraction for c in n.children]
        if got != expected:
            raise ValueError(f"children of node {n.id} do not partition its split interval")

    cat.nodes = nodes
    cat.leaves = {n.id for n in nodes if n.is_leaf}
    return cat
