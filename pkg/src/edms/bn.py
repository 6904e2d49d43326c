"""Belief-network independence checks on directed acyclic graphs.

Two equivalent criteria are implemented: a pathwise test (every
connecting path must be blocked by a non-collider in the conditioning
set, or by a collider whose descendants all avoid it) and the
moralization test (drop non-ancestors, marry co-parents, drop arrows,
then look for a separating set in the undirected graph).  The pathwise
test runs as a ball-passing reachability sweep; an explicit
path-enumeration variant is kept for cross-checking on small graphs.

These checks serve as the test oracle for the conditional-independence
statements the inference recursions rely on.
"""

from __future__ import annotations

from collections import deque


class Dag:
    """Directed acyclic graph over hashable node ids."""

    def __init__(self, nodes, edges):
        self.nodes = list(nodes)
        node_set = set(self.nodes)
        self.parents = {n: set() for n in self.nodes}
        self.children = {n: set() for n in self.nodes}
        for a, b in edges:
            if a not in node_set or b not in node_set:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
            self.children[a].add(b)
            self.parents[b].add(a)
        self._assert_acyclic()

    def _assert_acyclic(self):
        indeg = {n: len(self.parents[n]) for n in self.nodes}
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in self.children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.nodes):
            raise ValueError("graph has a directed cycle")

    def ancestors(self, seeds):
        out = set()
        stack = list(seeds)
        while stack:
            n = stack.pop()
            for p in self.parents[n]:
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    def descendants(self, node):
        out = set()
        stack = [node]
        while stack:
            n = stack.pop()
            for c in self.children[n]:
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out


def _check_sets(g, X, Y, Z):
    X, Y, Z = set(X), set(Y), set(Z)
    if X & Y or X & Z or Y & Z:
        raise ValueError("X, Y, Z must be disjoint")
    known = set(g.nodes)
    for s in (X, Y, Z):
        missing = s - known
        if missing:
            raise ValueError(f"unknown nodes {missing}")
    return X, Y, Z


def _reachable_pathwise(g: Dag, X, Z):
    """Nodes reachable from X along active paths, by ball passing.

    The ball bounces off observed nodes reached from a parent (collider
    activation, including activation through an observed descendant) and
    is absorbed by observed nodes reached from a child.
    """
    UP, DOWN = 0, 1
    visited = set()
    reached = set()
    queue = deque((x, UP) for x in X)
    while queue:
        n, direction = queue.popleft()
        if (n, direction) in visited:
            continue
        visited.add((n, direction))
        if n not in Z:
            reached.add(n)
        if direction == UP:
            if n not in Z:
                for p in g.parents[n]:
                    queue.append((p, UP))
                for c in g.children[n]:
                    queue.append((c, DOWN))
        else:
            if n not in Z:
                for c in g.children[n]:
                    queue.append((c, DOWN))
            else:
                for p in g.parents[n]:
                    queue.append((p, UP))
    return reached


def _all_undirected_paths(g: Dag, x, y):
    paths = []

    def extend(path, seen):
        n = path[-1]
        if n == y:
            paths.append(list(path))
            return
        for m in g.parents[n] | g.children[n]:
            if m not in seen:
                path.append(m)
                seen.add(m)
                extend(path, seen)
                seen.discard(m)
                path.pop()

    extend([x], {x})
    return paths


def _path_blocked(g: Dag, path, Z):
    for i in range(1, len(path) - 1):
        prev, node, nxt = path[i - 1], path[i], path[i + 1]
        collider = prev in g.parents[node] and nxt in g.parents[node]
        if collider:
            if node not in Z and not (g.descendants(node) & Z):
                return True
        else:
            if node in Z:
                return True
    return False


def d_separated_paths(g: Dag, X, Y, Z):
    """Explicit path enumeration; exponential, for small graphs only."""
    X, Y, Z = _check_sets(g, X, Y, Z)
    for x in X:
        for y in Y:
            for path in _all_undirected_paths(g, x, y):
                if not _path_blocked(g, path, Z):
                    return False
    return True


def _d_separated_moralize(g: Dag, X, Y, Z):
    keep = X | Y | Z | g.ancestors(X | Y | Z)
    und = {n: set() for n in keep}
    for n in keep:
        for c in g.children[n]:
            if c in keep:
                und[n].add(c)
                und[c].add(n)
    for n in keep:  # marry all pairs of retained parents of a retained child
        ps = [p for p in g.parents[n] if p in keep]
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                und[ps[i]].add(ps[j])
                und[ps[j]].add(ps[i])
    seen = set(X)
    stack = list(X)
    while stack:
        n = stack.pop()
        for m in und[n]:
            if m in Z or m in seen:
                continue
            if m in Y:
                return False
            seen.add(m)
            stack.append(m)
    return True


def d_separated(g: Dag, X, Y, Z, method="pathwise"):
    """True iff X and Y are conditionally independent given Z in g."""
    X, Y, Z = _check_sets(g, X, Y, Z)
    if method == "pathwise":
        return not (_reachable_pathwise(g, X, Z) & Y)
    if method == "moralize":
        return _d_separated_moralize(g, X, Y, Z)
    raise ValueError(f"unknown method {method!r}")
