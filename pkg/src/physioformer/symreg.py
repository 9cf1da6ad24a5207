"""Genetic-programming symbolic regression over selected features.

Expression trees are evolved against a sub-network's per-window outputs under
a mean-absolute-error loss with protected operator semantics, a hard node
budget, and a complexity-indexed Pareto front. The reported formula is the
converged front entry with the fewest distinct variables.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, DistillationError
from .explain import AFFECT_TARGET, CONTRIB_TARGET, importance, select_top_k
from .model import PhysioFormer

UNARY_OPS = ("sin", "cos", "log", "exp")
BINARY_OPS = ("add", "sub", "mul", "pow")
INFIX_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "pow": "^"}

PENALTY = 1e6
LOG_FLOOR = 1e-9
EXP_CLAMP = 30.0
POW_CLAMP = 6.0


class Node:
    """Expression tree node: constant, variable, or operator."""

    __slots__ = ("op", "value", "children")

    def __init__(self, op: str, value=None, children=None):
        self.op = op
        self.value = value
        self.children = children or []

    @staticmethod
    def const(value: float) -> "Node":
        return Node("const", float(value))

    @staticmethod
    def var(index: int) -> "Node":
        return Node("var", int(index))

    def copy(self) -> "Node":
        return Node(self.op, self.value, [c.copy() for c in self.children])

    def nodes(self) -> list["Node"]:
        out = [self]
        for c in self.children:
            out.extend(c.nodes())
        return out

    def variables(self) -> set[int]:
        return {n.value for n in self.nodes() if n.op == "var"}

    def to_infix(self, names: list[str] | None = None) -> str:
        if self.op == "const":
            return repr(round(self.value, 6))
        if self.op == "var":
            return names[self.value] if names else f"x{self.value}"
        if self.op in UNARY_OPS:
            return f"{self.op}({self.children[0].to_infix(names)})"
        a, b = (c.to_infix(names) for c in self.children)
        return f"({a} {INFIX_SYMBOL[self.op]} {b})"

    def to_prefix(self, names: list[str] | None = None) -> str:
        if self.op == "const":
            return repr(round(self.value, 6))
        if self.op == "var":
            return names[self.value] if names else f"x{self.value}"
        parts = " ".join(c.to_prefix(names) for c in self.children)
        return f"({self.op} {parts})"

    def __repr__(self):
        return f"Node<{self.to_infix()}>"


def complexity(expr: Node) -> int:
    """Node count: constants, variables, and operators each count one."""
    return len(expr.nodes())


def _eval_rows(expr: Node, x: np.ndarray) -> np.ndarray:
    """Vectorized protected evaluation; may contain non-finite entries."""
    if expr.op == "const":
        return np.full(x.shape[0], expr.value)
    if expr.op == "var":
        return x[:, expr.value]
    if expr.op in UNARY_OPS:
        a = _eval_rows(expr.children[0], x)
        with np.errstate(all="ignore"):
            if expr.op == "sin":
                return np.sin(a)
            if expr.op == "cos":
                return np.cos(a)
            if expr.op == "log":
                return np.log(np.abs(a) + LOG_FLOOR)
            return np.exp(np.minimum(a, EXP_CLAMP))
    a = _eval_rows(expr.children[0], x)
    b = _eval_rows(expr.children[1], x)
    with np.errstate(all="ignore"):
        if expr.op == "add":
            return a + b
        if expr.op == "sub":
            return a - b
        if expr.op == "mul":
            return a * b
        return np.power(np.abs(a), np.clip(b, -POW_CLAMP, POW_CLAMP))


def evaluate_rows(expr: Node, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation over rows plus the mask of rows that hit the penalty sentinel."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigurationError(f"expected a row matrix, got shape {x.shape}")
    values = _eval_rows(expr, x)
    invalid = ~np.isfinite(values)
    if np.any(invalid):
        values = np.where(invalid, PENALTY, values)
    return values, invalid


def evaluate(expr: Node, row) -> float:
    """Total scalar evaluation; protected semantics never return NaN/Inf."""
    values, _ = evaluate_rows(expr, np.asarray(row, dtype=float)[None, :])
    return float(values[0])


def mae_loss(expr: Node, x: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error with invalid rows counted at the fixed penalty."""
    target = np.asarray(target, dtype=float)
    values, invalid = evaluate_rows(expr, x)
    err = np.abs(values - target)
    err[invalid] = PENALTY
    return float(err.mean())


def r_squared(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    ss_res = float(np.sum((actual - pred) ** 2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res == 0.0:
            return 1.0
        raise ConfigurationError("R^2 undefined: constant target, non-zero residual")
    return 1.0 - ss_res / ss_tot


@dataclass
class SymRegConfig:
    population: int = 256
    generations: int = 60
    max_complexity: int = 15
    tournament: int = 5
    crossover_rate: float = 0.7
    mutation_rate: float = 0.25
    constant_jitter: float = 0.05
    const_opt_steps: int = 25
    seed: int = 0
    convergence_tol: float = 1e-12   # additive slack in the converged band
    selection_tol: float = 0.05      # relative width of the converged band
    top_k: int = 10

    def __post_init__(self):
        if self.max_complexity < 3:
            raise ConfigurationError("max_complexity must be at least 3")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0 <= rate <= 1:
                raise ConfigurationError(f"{name} must be in [0,1], got {rate}")


@dataclass
class ParetoEntry:
    complexity: int
    loss: float
    expr: Node
    n_vars: int
    selected: bool = False

    def to_dict(self, names: list[str] | None = None) -> dict:
        return {"complexity": self.complexity, "loss": self.loss,
                "n_vars": self.n_vars, "selected": self.selected,
                "infix": self.expr.to_infix(names),
                "prefix": self.expr.to_prefix(names)}


@dataclass
class ParetoFront:
    """Best expression per complexity, pruned to the dominance-free set."""

    entries: list[ParetoEntry] = field(default_factory=list)

    def min_loss(self) -> float:
        if not self.entries:
            raise DistillationError("empty Pareto front")
        return min(e.loss for e in self.entries)


def _prune_dominated(best: dict[int, tuple[float, Node]]) -> ParetoFront:
    front = ParetoFront()
    best_loss = np.inf
    for c in sorted(best):
        loss, expr = best[c]
        if loss < best_loss:
            front.entries.append(ParetoEntry(c, loss, expr, len(expr.variables())))
            best_loss = loss
    return front


def select_formula(front: ParetoFront, tol: float | None = None,
                   band: float | None = None) -> ParetoEntry:
    """Fewest-variables rule over the converged band of the front.

    Converged entries are those within ``(1 + band) * min_loss + tol`` of the
    best loss; among them the fewest distinct variables wins, then lower
    complexity, then lower loss.
    """
    if not front.entries:
        raise DistillationError("cannot select a formula from an empty front")
    tol = 1e-12 if tol is None else tol
    band = 0.05 if band is None else band
    pruned = _prune_dominated({e.complexity: (e.loss, e.expr) for e in front.entries})
    cutoff = (1.0 + band) * pruned.min_loss() + tol
    converged = [e for e in pruned.entries if e.loss <= cutoff]
    winner = min(converged, key=lambda e: (e.n_vars, e.complexity, e.loss))
    winner.selected = True
    return winner


# ---------------------------------------------------------------------------
# Evolution

def _random_leaf(rng: np.random.Generator, n_vars: int) -> Node:
    if rng.random() < 0.7:
        return Node.var(int(rng.integers(n_vars)))
    return Node.const(round(float(rng.uniform(-5, 5)), 4))


def _random_tree(rng: np.random.Generator, n_vars: int, depth: int,
                 full: bool) -> Node:
    if depth <= 0 or (not full and rng.random() < 0.3):
        return _random_leaf(rng, n_vars)
    ops = UNARY_OPS + BINARY_OPS
    op = ops[int(rng.integers(len(ops)))]
    if op in UNARY_OPS:
        return Node(op, children=[_random_tree(rng, n_vars, depth - 1, full)])
    return Node(op, children=[_random_tree(rng, n_vars, depth - 1, full),
                              _random_tree(rng, n_vars, depth - 1, full)])


def _init_population(rng: np.random.Generator, n_vars: int, size: int) -> list[Node]:
    pop = [Node.var(i) for i in range(n_vars)]
    pop.append(Node.const(1.0))
    depths = (2, 3, 4)
    i = 0
    while len(pop) < size:
        depth = depths[i % len(depths)]
        pop.append(_random_tree(rng, n_vars, depth, full=(i % 2 == 0)))
        i += 1
    return pop[:size]


def _mutate(rng: np.random.Generator, expr: Node, n_vars: int,
            jitter: float) -> Node:
    out = expr.copy()
    nodes = out.nodes()
    target = nodes[int(rng.integers(len(nodes)))]
    kind = rng.random()
    if kind < 0.3:
        # subtree replacement
        repl = _random_tree(rng, n_vars, 2, full=False)
        target.op, target.value, target.children = repl.op, repl.value, repl.children
    elif kind < 0.55:
        # point mutation preserving arity
        if target.op in BINARY_OPS:
            target.op = BINARY_OPS[int(rng.integers(len(BINARY_OPS)))]
        elif target.op in UNARY_OPS:
            target.op = UNARY_OPS[int(rng.integers(len(UNARY_OPS)))]
        elif target.op == "var":
            target.value = int(rng.integers(n_vars))
        else:
            target.value = float(target.value + rng.normal(0, jitter * (1 + abs(target.value))))
    elif kind < 0.8:
        # grow at the root: combine the whole tree with a fresh small term
        term = _random_tree(rng, n_vars, 1, full=False)
        op = BINARY_OPS[int(rng.integers(len(BINARY_OPS)))]
        old = out.copy()
        out = Node(op, children=[old, term] if rng.random() < 0.5 else [term, old])
    else:
        # constant jitter across the tree (or a leaf swap when no constants)
        consts = [n for n in out.nodes() if n.op == "const"]
        if consts:
            for node in consts:
                node.value = float(node.value + rng.normal(0, jitter * (1 + abs(node.value))))
        else:
            target.op, target.value, target.children = "const", round(float(rng.uniform(-5, 5)), 4), []
    return out


def _crossover(rng: np.random.Generator, a: Node, b: Node) -> Node:
    child = a.copy()
    nodes = child.nodes()
    target = nodes[int(rng.integers(len(nodes)))]
    donor_nodes = b.nodes()
    donor = donor_nodes[int(rng.integers(len(donor_nodes)))].copy()
    target.op, target.value, target.children = donor.op, donor.value, donor.children
    return child


def _tournament(rng: np.random.Generator, pop: list[Node], losses: list[float],
                size: int) -> Node:
    best_idx = None
    for _ in range(size):
        i = int(rng.integers(len(pop)))
        if best_idx is None or (losses[i], complexity(pop[i])) < (
                losses[best_idx], complexity(pop[best_idx])):
            best_idx = i
    return pop[best_idx]


def _optimize_constants(rng: np.random.Generator, expr: Node, x: np.ndarray,
                        target: np.ndarray, steps: int) -> tuple[Node, float]:
    best = expr.copy()
    best_loss = mae_loss(best, x, target)
    consts = [n for n in best.nodes() if n.op == "const"]
    if not consts:
        return best, best_loss
    for step in range(steps):
        scale = 0.5 * (0.8 ** step) + 1e-3
        candidate = best.copy()
        for node in candidate.nodes():
            if node.op == "const":
                node.value = float(node.value + rng.normal(0, scale * (1 + abs(node.value))))
        cand_loss = mae_loss(candidate, x, target)
        if cand_loss < best_loss:
            best, best_loss = candidate, cand_loss
    return best, best_loss


def evolve(x: np.ndarray, target: np.ndarray, cfg: SymRegConfig) -> ParetoFront:
    """Seeded tournament GP; tracks the best expression found per complexity."""
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigurationError(f"need a non-empty row matrix, got shape {x.shape}")
    if target.shape != (x.shape[0],):
        raise ConfigurationError("target length must match row count")
    n_vars = x.shape[1]
    rng = np.random.default_rng(cfg.seed)

    best_per_c: dict[int, tuple[float, Node]] = {}

    def record(expr: Node, loss: float) -> None:
        c = complexity(expr)
        if c <= cfg.max_complexity and (c not in best_per_c or loss < best_per_c[c][0]):
            best_per_c[c] = (loss, expr.copy())

    pop = _init_population(rng, n_vars, cfg.population)
    losses = [mae_loss(ind, x, target) for ind in pop]
    for ind, l in zip(pop, losses):
        record(ind, l)

    for _ in range(cfg.generations):
        ranked = np.argsort(losses, kind="stable")
        next_pop = [pop[int(ranked[0])].copy()]
        for idx in ranked[:3]:
            tuned, tuned_loss = _optimize_constants(rng, pop[int(idx)], x, target,
                                                    cfg.const_opt_steps)
            record(tuned, tuned_loss)
            next_pop.append(tuned)
        while len(next_pop) < cfg.population:
            parent = _tournament(rng, pop, losses, cfg.tournament)
            roll = rng.random()
            if roll < cfg.crossover_rate:
                other = _tournament(rng, pop, losses, cfg.tournament)
                child = _crossover(rng, parent, other)
            elif roll < cfg.crossover_rate + cfg.mutation_rate:
                child = _mutate(rng, parent, n_vars, cfg.constant_jitter)
            else:
                child = parent.copy()
            if complexity(child) > cfg.max_complexity:
                child = parent.copy()
            next_pop.append(child)
        pop = next_pop
        losses = [mae_loss(ind, x, target) for ind in pop]
        for ind, l in zip(pop, losses):
            record(ind, l)

    return _prune_dominated(best_per_c)


# ---------------------------------------------------------------------------
# Distillation of a trained model

@dataclass
class LawReport:
    group: str
    target: str
    feature_names: list[str]
    selected: ParetoEntry
    front: ParetoFront
    r2: float
    fit_curves: dict[str, list[dict]]

    def law_dict(self) -> dict:
        return {"group": self.group, "target": self.target,
                "features": self.feature_names,
                "law": self.selected.to_dict(self.feature_names),
                "r_squared": self.r2}


def distillation_data(model: PhysioFormer, dataset: Dataset, group: str,
                      target: str = AFFECT_TARGET):
    """Per-window (inputs, sub-network output) pairs in eval mode."""
    rows, outputs, subject_slices = [], [], {}
    offset = 0
    j = model.config.groups.index(group)
    for s in dataset.subjects:
        trace = model.forward(s.features, train=False)
        if target == AFFECT_TARGET:
            rows.append(trace.gamma[group])
            outputs.append(trace.theta[:, j])
        elif target == CONTRIB_TARGET:
            rows.append(trace.pf)
            outputs.append(trace.alpha[group])
        else:
            raise ConfigurationError(f"unknown distillation target {target!r}")
        n = trace.window_count
        subject_slices[s.subject_id] = (offset, offset + n)
        offset += n
    return np.vstack(rows), np.concatenate(outputs), subject_slices


def distill(model: PhysioFormer, dataset: Dataset, group: str,
            cfg: SymRegConfig, target: str = AFFECT_TARGET,
            fit_subjects: int = 4) -> LawReport:
    """Fit a closed-form law to one group's per-window sub-network output."""
    if group not in model.config.groups:
        raise DistillationError(f"unknown indicator group {group!r}")
    scores = importance(model, target, group, dataset)
    selection = select_top_k(scores, cfg.top_k)
    x_full, y, slices = distillation_data(model, dataset, group, target)
    x = x_full[:, selection.indices]

    front = evolve(x, y, cfg)
    chosen = select_formula(front, cfg.convergence_tol, cfg.selection_tol)
    pred, _ = evaluate_rows(chosen.expr, x)
    r2 = r_squared(pred, y)

    fit_curves = {}
    for sid in sorted(slices)[:fit_subjects]:
        lo, hi = slices[sid]
        fit_curves[sid] = [{"window": q, "model": float(y[lo + q]),
                            "law": float(pred[lo + q])}
                           for q in range(hi - lo)]
    return LawReport(group=group, target=target, feature_names=selection.names,
                     selected=chosen, front=front, r2=r2, fit_curves=fit_curves)


def write_law_report(report: LawReport, out_dir) -> list[Path]:
    """Emit the law JSON, the complexity-loss curve, and per-subject fit data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    law_path = out / f"laws_{report.group}.json"
    payload = report.law_dict()
    payload["front"] = [e.to_dict(report.feature_names) for e in report.front.entries]
    with open(law_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(law_path)

    pareto_path = out / f"pareto_{report.group}.csv"
    lines = ["complexity,loss"]
    lines += [f"{e.complexity},{repr(e.loss)}" for e in report.front.entries]
    pareto_path.write_text("\n".join(lines) + "\n")
    written.append(pareto_path)

    for sid, curve in report.fit_curves.items():
        fit_path = out / f"fit_{report.group}_{sid}.csv"
        lines = ["window,model,law"]
        lines += [f"{p['window']},{repr(p['model'])},{repr(p['law'])}" for p in curve]
        fit_path.write_text("\n".join(lines) + "\n")
        written.append(fit_path)
    return written
