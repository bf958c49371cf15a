"""Constructive decoding toolbox: typicality, square-root measurements,
double-blocked codes, and the numerical checks behind the error estimates.

The double-blocked construction runs l independent copies of an n-block
feedback code interleaved letter by letter (flat register k*l + j-1 carries
copy j's letter k+1) and inserts an entangling "global round" measurement on
the received prefix after each letter block, built from typical projectors of
the posterior ensembles via the square-root recipe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    LinalgError,
    embed_operator,
    herm_eigvals,
    identity,
    kron,
    partial_trace,
    permute_registers,
    pinv_sqrt,
    psd_sqrt,
    trace_norm,
)
from .protocol import (
    AdaptiveMeasurement,
    CapExceededError,
    Codebook,
    FeedbackCode,
    round_zero,
    _padded_povm,
)
from .quantum import (
    ER,
    PROB_FLOOR,
    DensityMatrix,
    Povm,
    ValidationError,
    apply_channel_at,
    apply_kraus,
    entropy,
    measure,
)

PROJECTOR_CAP = 4096
STRING_CAP = 2**20
DIM_BUDGET = 512  # qubits: n*l <= 9


@dataclass(frozen=True)
class TypicalityParams:
    """Width delta, exponent constant c, and block copies l for epsilon_t."""

    delta: float
    c: float = 1.0
    l: int = 1

    def __post_init__(self):
        if self.delta <= 0 or self.c <= 0 or self.l < 1:
            raise ValidationError("typicality parameters must be positive")

    def epsilon(self, t: int) -> float:
        """2^(-t l c delta^2), strictly decreasing in t."""
        if t < 1:
            raise ValidationError("round index must be >= 1")
        return float(2.0 ** (-t * self.l * self.c * self.delta**2))


def typical_set(p, n: int, delta: float) -> set[tuple[int, ...]]:
    """Strings whose letter counts all satisfy |N(x) - n p(x)| <= n delta.

    Letters of probability zero are excluded outright (the standard strong
    typicality convention), whatever the width.
    """
    p = np.asarray(list(p), dtype=float)
    k = len(p)
    if k**n > STRING_CAP:
        raise CapExceededError(f"{k ** n} strings exceed the enumeration cap")
    lo = np.ceil(n * p - n * delta - 1e-12)
    hi = np.floor(n * p + n * delta + 1e-12)
    hi[p <= 1e-12] = 0.0
    out = set()
    for s in itertools.product(range(k), repeat=n):
        counts = np.bincount(s, minlength=k)
        if np.all(counts >= lo) and np.all(counts <= hi):
            out.add(s)
    return out


@dataclass(frozen=True)
class TypicalProjectorData:
    """Lazy form: eigenbasis of rho plus the index strings kept by the projector."""

    eigvals: np.ndarray
    eigvecs: np.ndarray
    n: int
    strings: frozenset

    @property
    def rank(self) -> int:
        return len(self.strings)

    def compressed_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of Pi rho^(x)n Pi, i.e. the kept string probabilities."""
        vals = [float(np.prod(self.eigvals[list(s)])) for s in sorted(self.strings)]
        return np.asarray(vals)

    def overlap(self) -> float:
        """tr(rho^(x)n Pi)."""
        return float(sum(self.compressed_eigenvalues()))

    def matrix(self) -> np.ndarray:
        d = len(self.eigvals)
        if d**self.n > PROJECTOR_CAP:
            raise CapExceededError("materialized projector exceeds the cap")
        diag = np.zeros(d**self.n)
        for s in self.strings:
            idx = 0
            for x in s:
                idx = idx * d + x
            diag[idx] = 1.0
        v = np.array([[1.0 + 0j]])
        for _ in range(self.n):
            v = kron(v, self.eigvecs)
        return (v * diag) @ v.conj().T


def typical_projector_data(rho: DensityMatrix, n: int, delta: float) -> TypicalProjectorData:
    w, v = rho.eig()
    return TypicalProjectorData(w, v, n, frozenset(typical_set(w, n, delta)))


def typical_projector(rho: DensityMatrix, n: int, delta: float, lazy: bool = False):
    """Projector onto the delta-typical eigenstrings of rho^(x)n.

    Returns the dense matrix, or the lazy index/eigenbasis form when asked
    (mandatory above PROJECTOR_CAP).
    """
    data = typical_projector_data(rho, n, delta)
    return data if lazy else data.matrix()


def cond_typical_projector(states: dict, word, delta: float) -> np.ndarray:
    """Conditionally typical projector for a labeled word.

    Positions carrying the same label are grouped, each group receives the
    typical projector of its state on that many copies, and the group
    projectors are placed back at their positions.
    """
    word = tuple(word)
    dims = []
    for u in word:
        if u not in states:
            raise ValidationError(f"no state supplied for label {u!r}")
        dims.append(states[u].dim)
    total = 1
    for d in dims:
        total *= d
    if total > PROJECTOR_CAP:
        raise CapExceededError("conditional projector exceeds the cap")
    out = identity(total)
    for u in sorted(set(word), key=repr):
        positions = [i for i, x in enumerate(word) if x == u]
        block = typical_projector(states[u], len(positions), delta)
        out = out @ embed_operator(block, dims, positions)
    return out


def gamma_operator(avg_proj: np.ndarray, cond_proj: np.ndarray) -> np.ndarray:
    """Pi_avg Pi_cond Pi_avg: PSD and at most the identity."""
    if avg_proj.shape != cond_proj.shape:
        raise LinalgError("projector dimensions differ")
    g = avg_proj @ cond_proj @ avg_proj
    return 0.5 * (g + g.conj().T)


@dataclass(frozen=True)
class SubPovm:
    """PSD effects summing to at most the identity, with an explicit remainder."""

    elements: tuple
    remainder: np.ndarray = field(init=False)

    def __post_init__(self):
        els = tuple((lab, np.asarray(m, dtype=complex)) for lab, m in self.elements)
        if not els:
            raise ValidationError("sub-POVM needs at least one element")
        dim = els[0][1].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for _, m in els:
            total += m
        w = herm_eigvals(0.5 * (total + total.conj().T))
        if w[0] > 1.0 + 1e-9 or w[-1] < -1e-9:
            raise ValidationError("effects violate 0 <= sum R <= I")
        rem = identity(dim) - total
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "remainder", 0.5 * (rem + rem.conj().T))

    @property
    def dim(self) -> int:
        return self.elements[0][1].shape[0]

    def as_complete_povm(self, er_label=ER) -> Povm:
        """Measurement-operator form: sqrt(R_r) elements plus sqrt(remainder)."""
        els = [(lab, psd_sqrt(m)) for lab, m in self.elements]
        els.append((er_label, psd_sqrt(self.remainder)))
        return Povm(tuple(els))


def square_root_measurement(gammas: dict) -> SubPovm:
    """Pretty-good measurement: R_r = T^(-1/2) Gamma_r T^(-1/2), T = sum Gamma.

    The inverse square root lives on the support of T, so the elements sum to
    the support projector (never above the identity).
    """
    labels = sorted(gammas, key=repr)
    if not labels:
        raise ValidationError("no Gamma operators supplied")
    total = None
    for lab in labels:
        g = np.asarray(gammas[lab], dtype=complex)
        total = g.copy() if total is None else total + g
    w = pinv_sqrt(total)
    els = []
    for lab in labels:
        r = w @ np.asarray(gammas[lab], dtype=complex) @ w
        els.append((lab, 0.5 * (r + r.conj().T)))
    return SubPovm(tuple(els))


@dataclass(frozen=True)
class GentleReport:
    overlap: float
    epsilon: float
    distance: float
    bound: float
    hypothesis_ok: bool
    passed: bool


def gentle_measurement_check(rho: DensityMatrix, effect: np.ndarray, eps: float) -> GentleReport:
    """Winter-style tender measurement bound sqrt(24 eps) + 6 eps.

    Hypothesis: tr(rho R) >= 1 - 3 eps; reported rather than raised when it
    fails.  The distance is between rho and its renormalized post-measurement
    state sqrt(R) rho sqrt(R) / tr(rho R).
    """
    overlap = float(np.trace(rho.mat @ effect).real)
    root = psd_sqrt(effect)
    post = root @ rho.mat @ root
    distance = trace_norm(rho.mat - post / overlap) if overlap > PROB_FLOOR else 2.0
    bound = float(np.sqrt(24.0 * eps) + 6.0 * eps)
    return GentleReport(
        overlap=overlap,
        epsilon=eps,
        distance=float(distance),
        bound=bound,
        hypothesis_ok=overlap >= 1.0 - 3.0 * eps - 1e-12,
        passed=distance <= bound + 1e-9,
    )


def hayashi_nagaoka_check(s: np.ndarray, t: np.ndarray, tol: float = 1e-9):
    """Operator inequality I - (S+T)^(-1/2) S (S+T)^(-1/2) <= 2(I-S) + 4T.

    Requires 0 <= S <= I and T >= 0.  Returns (violation, passed) where the
    violation is the largest eigenvalue of LHS - RHS (negative when the
    inequality holds strictly).
    """
    s = 0.5 * (s + s.conj().T)
    t = 0.5 * (t + t.conj().T)
    ws = herm_eigvals(s)
    wt = herm_eigvals(t)
    if ws[-1] < -1e-9 or ws[0] > 1.0 + 1e-9 or wt[-1] < -1e-9:
        raise ValidationError("hayashi_nagaoka_check needs 0 <= S <= I and T >= 0")
    w = pinv_sqrt(s + t)
    lhs = identity(s.shape[0]) - w @ s @ w
    rhs = 2.0 * (identity(s.shape[0]) - s) + 4.0 * t
    diff = rhs - lhs
    violation = -float(herm_eigvals(0.5 * (diff + diff.conj().T))[-1])
    return violation, violation <= tol


@dataclass(frozen=True)
class TypicalityReport:
    overlap: float
    overlap_bound: float
    max_compressed: float
    eigen_cap: float
    rank: int
    overlap_ok: bool
    eigen_ok: bool


def typicality_bounds_check(rho: DensityMatrix, n: int, delta: float, c: float = 1.0) -> TypicalityReport:
    """Measured typicality quantities against the standard bounds.

    Checks tr(rho^n Pi) >= 1 - 2 |spec| exp(-2 n delta^2) and that every
    Pi-compressed eigenvalue is at most 2^(-n (S(rho) - c delta)).  Both
    measured values and bounds are reported; the eigenvalue cap only holds
    when c is at least the spread of |log2 lambda| across the spectrum, so a
    too-small c yields an honest failing report.
    """
    data = typical_projector_data(rho, n, delta)
    overlap = data.overlap()
    d = rho.dim
    overlap_bound = 1.0 - 2.0 * d * float(np.exp(-2.0 * n * delta * delta))
    comp = data.compressed_eigenvalues()
    max_comp = float(comp.max()) if comp.size else 0.0
    cap = float(2.0 ** (-n * (entropy(rho) - c * delta)))
    return TypicalityReport(
        overlap=overlap,
        overlap_bound=overlap_bound,
        max_compressed=max_comp,
        eigen_cap=cap,
        rank=data.rank,
        overlap_ok=overlap >= overlap_bound - 1e-12,
        eigen_ok=max_comp <= cap + 1e-15,
    )


def error_recursion(per_round) -> list[float]:
    """Cumulative error E(P_t) = E(P_{t-1}) + p_t (1 - E(P_{t-1}))."""
    acc = 0.0
    out = []
    for p in per_round:
        p = float(p)
        if not 0.0 <= p <= 1.0 + 1e-12:
            raise ValidationError(f"conditional error {p} outside [0,1]")
        acc = acc + p * (1.0 - acc)
        out.append(acc)
    return out


def disturbance_accumulator(params: TypicalityParams, t: int) -> float:
    """sum_{s<=t} (sqrt(24 eps_s) + 6 eps_s) for eps_s = 2^(-s l c delta^2)."""
    if t < 1:
        raise ValidationError("round index must be >= 1")
    return cumulative_disturbance_bound(params.epsilon(s) for s in range(1, t + 1))


def cumulative_disturbance_bound(eps_values) -> float:
    return float(sum(np.sqrt(24.0 * e) + 6.0 * e for e in eps_values))


# ----------------------------------------------------------------------------
# Double-blocked codes.


def _interleave(group, n: int, l: int) -> tuple[int, ...]:
    # flat letter at k*l + (j-1) is copy j's letter k+1
    return tuple(group[q % l][q // l] for q in range(n * l))


def _copy_to_flat_perm(n: int, l: int) -> list[int]:
    """permutation with new (flat, letter-major) register i = old (copy-major) register perm[i]."""
    perm = []
    for f in range(n * l):
        k, j = f // l, f % l
        perm.append(j * n + k)
    return perm


def base_prefix_tables(code: FeedbackCode) -> list[dict]:
    """For t = 0..n-1: (word, k_1^t) -> (P(k_1^t | word), omega^t)."""
    n = code.n
    tables: list[dict] = [dict() for _ in range(n)]
    for word in code.codebook.words:
        frontier = [((), 1.0, round_zero(code, word))]
        tables[0][(word, ())] = (1.0, frontier[0][2])
        for t in range(1, n):
            m = t + 1
            new = []
            for history, p_path, state in frontier:
                povm = _padded_povm(code.measurement(t, history), code.dims, t)
                sigma = apply_channel_at(code.channel, state, t)
                for outcome, (p, post) in measure(povm, sigma).items():
                    if p_path * p < PROB_FLOOR:
                        continue
                    kraus = code.feedback_kraus(m, outcome)
                    if kraus is not None and m < n:
                        post = apply_kraus(kraus, post, registers=range(m, n))
                    new.append((history + (outcome,), p_path * p, post))
            frontier = new
            for history, p_path, state in frontier:
                tables[t][(word, history)] = (p_path, state)
    return tables


def _slot_components(q: int, n: int, l: int):
    """(base copy j and measurement index k, or None; global round t, or None)."""
    j = (q % l) + 1
    k = (q + 1 - j) // l
    base_comp = (j, k) if 1 <= k <= n - 1 else None
    glob = q // l if (q % l == 0 and 1 <= q // l <= n) else None
    return base_comp, glob


class _GlobalRoundBuilder:
    """Builds the Gamma operators and PGM for one global round and history."""

    def __init__(self, base: FeedbackCode, groups, gprobs, tables, l: int, delta: float):
        self.base = base
        self.groups = groups
        self.gprobs = gprobs
        self.tables = tables
        self.l = l
        self.delta = delta
        self.n = base.n
        self.d = base.channel.in_dim

    def posterior(self, t: int, r_blocks, k_hists):
        """Joint posterior over groups given prior global outcomes and base outcomes."""
        post = {}
        for g, pg in zip(self.groups, self.gprobs):
            ok = True
            for s, block in enumerate(r_blocks):
                if tuple(w[s] for w in g) != block:
                    ok = False
                    break
            if not ok:
                continue
            like = pg
            for j in range(self.l):
                entry = self.tables[t - 1].get((g[j], k_hists[j]))
                if entry is None:
                    like = 0.0
                    break
                like *= entry[0]
            if like > 0.0:
                post[g] = like
        total = sum(post.values())
        if total <= 0.0:
            return {}
        return {g: p / total for g, p in post.items()}

    def receiver_state(self, t: int, word, k_hist) -> np.ndarray:
        _, omega = self.tables[t - 1][(word, k_hist)]
        return partial_trace(omega.mat, omega.dims, keep=range(t))

    def gammas(self, t: int, r_blocks, k_hists):
        """Gamma operators on the flat received prefix (dim d^(t l)), by candidate block."""
        post = self.posterior(t, r_blocks, k_hists)
        if not post:
            return {}
        d, l = self.d, self.l
        marg = [{} for _ in range(l)]
        for g, p in post.items():
            for j in range(l):
                marg[j][g[j]] = marg[j].get(g[j], 0.0) + p

        def avg_state(j, restrict=None):
            acc, tot = None, 0.0
            for w, p in marg[j].items():
                if restrict is not None and w[t - 1] != restrict:
                    continue
                sigma = self.receiver_state(t, w, k_hists[j])
                acc = p * sigma if acc is None else acc + p * sigma
                tot += p
            if acc is None or tot <= 0.0:
                return None
            return DensityMatrix(acc / tot, (d,) * t)

        labels = []
        avg_states = {}
        for j in range(l):
            lab = (tuple(b[j] for b in r_blocks), k_hists[j])
            labels.append(lab)
            if lab not in avg_states:
                avg_states[lab] = avg_state(j)
        pi_avg = cond_typical_projector(avg_states, labels, self.delta)

        candidates = sorted({tuple(g[j][t - 1] for j in range(l)) for g in post})
        perm = _copy_to_flat_perm(t, l)
        pi_avg = permute_registers(pi_avg, (d,) * (t * l), perm)
        out = {}
        for r in candidates:
            cond_states = {}
            cond_labels = []
            usable = True
            for j in range(l):
                lab = (labels[j], r[j])
                cond_labels.append(lab)
                if lab not in cond_states:
                    state = avg_state(j, restrict=r[j])
                    if state is None:
                        usable = False
                        break
                    cond_states[lab] = state
            if not usable:
                continue
            pi_r = cond_typical_projector(cond_states, cond_labels, self.delta)
            pi_r = permute_registers(pi_r, (d,) * (t * l), perm)
            out[r] = gamma_operator(pi_avg, pi_r)
        return out




def build_double_blocked_code(
    base: FeedbackCode,
    l: int,
    delta: float = 0.3,
    groups=None,
    dim_budget: int = DIM_BUDGET,
) -> FeedbackCode:
    """Interleave l copies of ``base`` with square-root global-round decoding.

    ``groups`` selects which l-tuples of base codewords form the blocked
    codebook (default: all combinations, with product probabilities); the
    implied per-round rate split is reported by ``rate_split``.  The result
    is an ordinary FeedbackCode: global-round measurements are tabulated per
    outcome history, and the final measurement emits flat codewords (or
    'er'), so the default decode rule applies.
    """
    n, d = base.n, base.channel.in_dim
    nl = n * l
    if d**nl > dim_budget:
        raise CapExceededError(f"dimension {d ** nl} exceeds the budget {dim_budget}")
    if groups is None:
        groups = list(itertools.product(base.codebook.words, repeat=l))
    else:
        groups = [tuple(tuple(w) for w in g) for g in groups]
    gprobs = np.array(
        [np.prod([base.probs[base.word_index(w)] for w in g]) for g in groups], dtype=float
    )
    gprobs = gprobs / gprobs.sum()

    flat_words = tuple(_interleave(g, n, l) for g in groups)
    book = Codebook(base.codebook.alphabet, nl, flat_words)
    perm = _copy_to_flat_perm(n, l)
    flat_states = []
    for g in groups:
        mat = None
        for w in g:
            s = base.states[base.word_index(w)].mat
            mat = s.copy() if mat is None else kron(mat, s)
        flat_states.append(DensityMatrix(permute_registers(mat, (d,) * nl, perm), (d,) * nl))

    tables = base_prefix_tables(base)
    builder = _GlobalRoundBuilder(base, groups, gprobs, tables, l, delta)

    def word_from_blocks(blocks):
        return tuple(blocks[q // l][q % l] for q in range(nl))

    def history_data(history):
        """Prior global blocks and per-copy base outcome tuples from a flat history."""
        r_blocks = []
        k_hists = [() for _ in range(l)]
        for q0, outcome in enumerate(history):
            q = q0 + 1
            base_comp, glob = _slot_components(q, n, l)
            if base_comp and glob is not None:
                r, kb = outcome
                r_blocks.append(r)
                k_hists[base_comp[0] - 1] += (kb,)
            elif glob is not None:
                r_blocks.append(outcome)
            elif base_comp:
                k_hists[base_comp[0] - 1] += (outcome,)
        return r_blocks, k_hists

    fixed_cache: dict[int, Povm] = {}

    def slot_povm(q: int, history):
        base_comp, glob = _slot_components(q, n, l)
        d_pref = d**q
        if glob is None and q in fixed_cache:
            return fixed_cache[q]
        els_base = None
        if base_comp is not None:
            j, k = base_comp
            povm = base.measurement(k)  # base schedules are fixed Povms
            targets = [s * l + (j - 1) for s in range(k)]
            els_base = [(lab, embed_operator(f, (d,) * q, targets)) for lab, f in povm.elements]
        if glob is None:
            out = Povm(tuple(els_base)) if els_base else Povm(((0, identity(d_pref)),))
            fixed_cache[q] = out
            return out
        t = glob
        r_blocks, k_hists = history_data(history)
        gammas = {} if ER in r_blocks else builder.gammas(t, r_blocks, k_hists)
        if gammas:
            sub = square_root_measurement(gammas)
            roots = [(lab, psd_sqrt(m)) for lab, m in sub.elements]
            roots.append((ER, psd_sqrt(sub.remainder)))
        else:
            roots = [(ER, identity(d_pref))]
        if t == n:
            roots = [
                (word_from_blocks(tuple(r_blocks) + (lab,)) if lab != ER else ER, m)
                for lab, m in roots
            ]
        if els_base is None:
            return Povm(tuple(roots))
        els = []
        for r_lab, root in roots:
            for b_lab, f in els_base:
                els.append(((r_lab, b_lab), f @ root))
        return Povm(tuple(els))

    tables_by_slot: list[dict] = [dict() for _ in range(nl)]
    feedback: dict = {}

    def record_feedback(q: int, povm: Povm):
        base_comp, glob = _slot_components(q, n, l)
        if base_comp is None:
            return
        j, k = base_comp
        m_flat = q + 1
        suffix_dims = (d,) * (nl - m_flat)
        if not suffix_dims:
            return
        per = feedback.setdefault(m_flat, {})
        for lab in povm.labels:
            if lab in per:
                continue
            b_lab = lab[1] if glob is not None else lab
            base_kraus = base.feedback_kraus(k + 1, b_lab)
            if base_kraus is None:
                continue
            targets = [s * l + (j - 1) - m_flat for s in range(k + 1, n)]
            if not targets:
                continue
            per[lab] = tuple(
                embed_operator(np.asarray(mk, dtype=complex), suffix_dims, targets)
                for mk in base_kraus
            )
        if not per:
            feedback.pop(m_flat, None)

    def visit(q: int, history):
        if q > nl:
            return
        povm = slot_povm(q, history)
        tables_by_slot[q - 1][history] = povm
        record_feedback(q, povm)
        for lab in povm.labels:
            visit(q + 1, history + (lab,))

    visit(1, ())

    measurements: list = []
    for q in range(1, nl + 1):
        table = tables_by_slot[q - 1]
        unique = {id(p) for p in table.values()}
        if len(unique) == 1:
            measurements.append(next(iter(table.values())))
        else:
            measurements.append(AdaptiveMeasurement(table))

    probs_t = tuple(float(p) for p in gprobs)
    return FeedbackCode(book, base.channel, probs_t, tuple(flat_states), tuple(measurements), feedback)


def rate_split(code: FeedbackCode, l: int) -> tuple[float, ...]:
    """Per-global-round rates R(t) = log2(N_t) / l from the blocked codebook.

    N_t counts the distinct letter-t blocks labelling the round-t measurement;
    the splits sum to log2(N)/l when the codebook is a full product.
    """
    n = code.codebook.n // l
    out = []
    for t in range(1, n + 1):
        blocks = {tuple(w[(t - 1) * l : t * l]) for w in code.codebook.words}
        out.append(float(np.log2(len(blocks))) / l)
    return tuple(out)


@dataclass(frozen=True)
class DisturbanceRecord:
    """One correct-decoding branch at one global round of a blocked code."""

    group: tuple
    outcomes: tuple
    round: int
    probability: float
    distance: float
    bound: float
    epsilons: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.distance <= self.bound + 1e-9


def cumulative_disturbance_report(
    base: FeedbackCode,
    l: int,
    delta: float = 0.3,
    groups=None,
) -> list[DisturbanceRecord]:
    """Measured cumulative disturbance of the global-round measurements.

    Follows every correct-decoding branch of the double-blocked code,
    comparing the joint state (with global-round back-action) against the
    tensor product of the independently evolved copies conditioned on the
    same base outcomes.  Round s contributes a gentle-measurement allowance
    of sqrt(24 eps_s) + 6 eps_s with eps_s measured as (1 - tr(omega R)) / 3
    on that branch; the trace distance must stay below the running total at
    every global round.
    """
    flat = build_double_blocked_code(base, l, delta=delta, groups=groups)
    n, d = base.n, base.channel.in_dim
    nl = n * l
    dims = (d,) * nl
    records: list[DisturbanceRecord] = []

    for word in flat.codebook.words:
        group = tuple(tuple(word[k * l + j] for k in range(n)) for j in range(l))
        start = round_zero(flat, word)
        branches = [((), 1.0, start, start, ())]
        for q in range(1, nl + 1):
            base_comp, glob = _slot_components(q, n, l)
            new = []
            for history, p_path, rho_flat, rho_ref, eps in branches:
                if q <= nl - 1:
                    sigma_flat = apply_channel_at(flat.channel, rho_flat, q)
                    sigma_ref = apply_channel_at(flat.channel, rho_ref, q)
                else:
                    sigma_flat, sigma_ref = rho_flat, rho_ref
                povm = flat.measurement(q, history)
                eps_here = eps
                correct_r = None
                if glob is not None:
                    t = glob
                    correct_r = word if t == n else tuple(group[j][t - 1] for j in range(l))
                    effect = None
                    for lab, el in povm.elements:
                        r_lab = lab[0] if base_comp is not None else lab
                        if r_lab != correct_r:
                            continue
                        e = el.conj().T @ el
                        effect = e if effect is None else effect + e
                    if effect is None:
                        continue  # correct outcome unreachable on this branch
                    big = kron(effect, identity(d ** (nl - q))) if q < nl else effect
                    overlap = float(np.trace(sigma_ref.mat @ big).real)
                    eps_here = eps + (max((1.0 - overlap) / 3.0, 0.0),)
                for lab, el in povm.elements:
                    if glob is not None:
                        r_lab = lab[0] if base_comp is not None else lab
                        if r_lab != correct_r:
                            continue
                    big = kron(el, identity(d ** (nl - q))) if q < nl else el
                    post_flat = big @ sigma_flat.mat @ big.conj().T
                    p_flat = float(np.trace(post_flat).real)
                    if p_flat < PROB_FLOOR:
                        continue
                    if base_comp is not None:
                        j, k = base_comp
                        b_lab = lab[1] if glob is not None else lab
                        f = dict(base.measurement(k).elements)[b_lab]
                        f_emb = embed_operator(f, (d,) * q, [s * l + (j - 1) for s in range(k)])
                        f_big = kron(f_emb, identity(d ** (nl - q))) if q < nl else f_emb
                        post_ref = f_big @ sigma_ref.mat @ f_big.conj().T
                        p_ref = float(np.trace(post_ref).real)
                        if p_ref < PROB_FLOOR:
                            continue
                    else:
                        post_ref, p_ref = sigma_ref.mat, 1.0
                    rho_f = DensityMatrix(post_flat / p_flat, dims)
                    rho_r = DensityMatrix(post_ref / p_ref, dims)
                    m_flat = q + 1
                    kraus = flat.feedback_kraus(m_flat, lab)
                    if kraus is not None and m_flat < nl:
                        rho_f = apply_kraus(kraus, rho_f, registers=range(m_flat, nl))
                        rho_r = apply_kraus(kraus, rho_r, registers=range(m_flat, nl))
                    nb = (history + (lab,), p_path * p_flat, rho_f, rho_r, eps_here)
                    if glob is not None:
                        records.append(
                            DisturbanceRecord(
                                group,
                                nb[0],
                                glob,
                                nb[1],
                                float(trace_norm(rho_f.mat - rho_r.mat)),
                                cumulative_disturbance_bound(eps_here),
                                eps_here,
                            )
                        )
                    new.append(nb)
            branches = new
    return records
