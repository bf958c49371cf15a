"""n-block feedback-code protocol engine.

A feedback code transmits one codeword letter per channel use.  Round 1
prepares omega^0 by sending the first letter; update m (2 <= m <= n) sends
letter m, measures M_{m-1} on the received prefix and applies the
outcome-conditioned post-processing map on the letters still to be sent.
After update n the final measurement M_n produces the decoding outcome.
Every register therefore passes through the channel exactly once, and the
outcome of M_{m-1} can only influence registers m+1..n (1-indexed), matching
the domain of the post-processing maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .cqstate import CqState, prune_branches
from .linalg import identity, kron, pinv_sqrt, psd_sqrt
from .quantum import (
    ER,
    PROB_FLOOR,
    DensityMatrix,
    Povm,
    QuantumChannel,
    ValidationError,
    apply_channel_at,
    apply_kraus,
    measure,
    random_density_matrix,
    random_povm,
    random_pure_state,
    random_unitary,
)

ENUM_CAP = 10**6


class CapExceededError(Exception):
    """An exact enumeration would exceed the configured branch budget."""


def _prod(xs) -> int:
    out = 1
    for x in xs:
        out *= int(x)
    return out


@dataclass(frozen=True)
class Codebook:
    """Classical code: distinct length-n strings over a finite alphabet."""

    alphabet: int
    n: int
    words: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        words = tuple(tuple(int(x) for x in w) for w in self.words)
        object.__setattr__(self, "words", words)
        if len(set(words)) != len(words):
            raise ValidationError("codebook words are not distinct")
        for w in words:
            if len(w) != self.n:
                raise ValidationError(f"word {w} does not have length {self.n}")
            if any(not 0 <= x < self.alphabet for x in w):
                raise ValidationError(f"word {w} uses letters outside the alphabet")

    @property
    def size(self) -> int:
        return len(self.words)


class AdaptiveMeasurement:
    """Measurement whose POVM is tabulated by the outcome history so far.

    The table maps the tuple of earlier-round outcomes to a Povm; it is built
    in a deterministic order so repeated constructions are identical.
    """

    def __init__(self, table: dict):
        if not table:
            raise ValidationError("adaptive measurement needs at least one entry")
        self.table = dict(table)
        labels: list[Hashable] = []
        seen = set()
        for povm in self.table.values():
            for lab in povm.labels:
                if lab not in seen:
                    seen.add(lab)
                    labels.append(lab)
        self._labels = tuple(labels)
        dims = {povm.dim for povm in self.table.values()}
        if len(dims) != 1:
            raise ValidationError("adaptive measurement entries have mixed dimensions")
        self.dim = dims.pop()

    @property
    def labels(self) -> tuple[Hashable, ...]:
        return self._labels

    def at(self, history: tuple) -> Povm:
        try:
            return self.table[tuple(history)]
        except KeyError:
            raise ValidationError(f"no measurement tabulated for history {history!r}") from None

    def entries(self):
        return self.table.items()


@dataclass(frozen=True)
class FeedbackCode:
    """The code quadruple plus the channel it is built for.

    measurements[j-1] is M_j, acting on the first j registers (a Povm, or an
    AdaptiveMeasurement resolved on the outcome history).  feedback[m] maps
    the outcome of M_{m-1} to a Kraus family on registers m..n-1 (0-indexed);
    missing entries mean "do nothing".  decode maps the full outcome tuple to
    a codeword (default: the outcome of M_n already is one).
    """

    codebook: Codebook
    channel: QuantumChannel
    probs: tuple[float, ...]
    states: tuple[DensityMatrix, ...]
    measurements: tuple
    feedback: dict = field(default_factory=dict)
    decode: Callable | dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "measurements", tuple(self.measurements))
        object.__setattr__(self, "feedback", dict(self.feedback))

    @property
    def n(self) -> int:
        return self.codebook.n

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.channel.in_dim,) * self.codebook.n

    def word_index(self, word) -> int:
        word = tuple(int(x) for x in word)
        try:
            return self.codebook.words.index(word)
        except ValueError:
            raise ValidationError(f"unknown codeword {word}") from None

    def measurement(self, j: int, history: tuple = ()):
        m = self.measurements[j - 1]
        return m.at(history) if isinstance(m, AdaptiveMeasurement) else m

    def outcome_labels(self, j: int) -> tuple[Hashable, ...]:
        m = self.measurements[j - 1]
        return m.labels

    def feedback_kraus(self, m: int, outcome):
        per_round = self.feedback.get(m)
        if not per_round:
            return None
        return per_round.get(outcome)


def decode_outcomes(code: FeedbackCode, outcomes: tuple) -> Hashable:
    if code.decode is None:
        return outcomes[-1]
    if callable(code.decode):
        return code.decode(outcomes)
    return code.decode.get(tuple(outcomes), ER)


@dataclass(frozen=True)
class ProtocolTranscript:
    word: tuple[int, ...]
    outcomes: tuple
    probability: float
    states: tuple[DensityMatrix, ...]  # omega^0 .. omega^{n-1}
    decoded: Hashable


@dataclass
class CodeReport:
    violations: list[tuple[str, float]] = field(default_factory=list)

    def add(self, name: str, magnitude: float = float("nan")):
        self.violations.append((name, magnitude))

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_code(code: FeedbackCode, tol: float = 1e-9) -> CodeReport:
    """Check every structural invariant; returns a report, never raises."""
    rep = CodeReport()
    book = code.codebook
    n = book.n
    d = code.channel.in_dim

    if code.channel.in_dim != code.channel.out_dim:
        rep.add("channel: not square", abs(code.channel.in_dim - code.channel.out_dim))
    if len(code.probs) != book.size or len(code.states) != book.size:
        rep.add("ensemble: arity mismatch with codebook", 0.0)
        return rep
    psum = sum(code.probs)
    if abs(psum - 1.0) > 1e-12:
        rep.add("ensemble: probabilities do not sum to 1", abs(psum - 1.0))
    if any(p < -1e-12 for p in code.probs):
        rep.add("ensemble: negative probability", min(code.probs))
    for i, rho in enumerate(code.states):
        if rho.dims != (d,) * n:
            rep.add(f"ensemble: state {i} has shape {rho.dims}", 0.0)
            continue
        try:
            rho.validate()
        except ValidationError:
            from .linalg import herm_eigvals

            rep.add(f"ensemble: state {i} is not PSD", float(herm_eigvals(rho.mat)[-1]))

    if len(code.measurements) != n:
        rep.add(f"measurements: expected {n}, got {len(code.measurements)}", 0.0)
        return rep
    for j in range(1, n + 1):
        meas = code.measurements[j - 1]
        entries = meas.entries() if isinstance(meas, AdaptiveMeasurement) else [((), meas)]
        for hist, povm in entries:
            if povm.dim != d**j:
                rep.add(f"M_{j}: dimension {povm.dim} != {d ** j}", 0.0)
                continue
            defect = povm.completeness_defect()
            if defect > tol:
                rep.add(f"M_{j}: completeness defect (history={hist!r})", defect)
    final_labels = set(code.outcome_labels(n))
    allowed = set(book.words) | {ER}
    if code.decode is None and not final_labels <= allowed:
        rep.add("M_n: outcomes are not codewords plus 'er'", float(len(final_labels - allowed)))

    for m, per_outcome in sorted(code.feedback.items()):
        suffix = (d,) * (n - m)
        if m < 2 or m > n:
            rep.add(f"feedback round {m}: out of range", 0.0)
            continue
        if not suffix:
            rep.add(f"feedback round {m}: acts on an empty register set", 0.0)
            continue
        d_suf = _prod(suffix)
        for outcome, kraus in per_outcome.items():
            mats = [np.asarray(k, dtype=complex) for k in kraus]
            if any(k.shape != (d_suf, d_suf) for k in mats):
                rep.add(f"feedback round {m} outcome {outcome!r}: wrong shape", 0.0)
                continue
            total = sum(k.conj().T @ k for k in mats)
            defect = float(np.max(np.abs(total - identity(d_suf))))
            if defect > tol:
                rep.add(f"feedback round {m} outcome {outcome!r}: completeness", defect)
    return rep


def _padded_povm(povm: Povm, dims, j: int) -> Povm:
    """Pad a measurement on the first j registers with identity on the rest."""
    d_pref = _prod(dims[:j])
    if povm.dim != d_pref:
        raise ValidationError(f"measurement dim {povm.dim} != prefix dim {d_pref}")
    if j == len(dims):
        return povm
    pad = identity(_prod(dims[j:]))
    return Povm(tuple((lab, kron(f, pad)) for lab, f in povm.elements), povm.mode)


def round_zero(code: FeedbackCode, word) -> DensityMatrix:
    """omega^0: the codeword state with the channel applied on register 0."""
    idx = code.word_index(word)
    return apply_channel_at(code.channel, code.states[idx], 0)


def round_update(
    code: FeedbackCode,
    state: DensityMatrix,
    m: int,
    outcome,
    history: tuple = (),
) -> tuple[float, DensityMatrix]:
    """One protocol update: channel on register m-1, measure M_{m-1}, post-process.

    ``state`` is omega^{m-2}; returns the conditional probability of
    ``outcome`` and omega^{m-1}.  ``history`` carries earlier outcomes for
    adaptive measurement schedules.
    """
    n = code.n
    if not 2 <= m <= n:
        raise ValidationError(f"round {m} out of range 2..{n}")
    sigma = apply_channel_at(code.channel, state, m - 1)
    povm = _padded_povm(code.measurement(m - 1, history), code.dims, m - 1)
    branches = measure(povm, sigma)
    if outcome not in branches:
        raise ValidationError(f"outcome {outcome!r} has probability below the floor")
    p, post = branches[outcome]
    kraus = code.feedback_kraus(m, outcome)
    if kraus is not None and m < n:
        post = apply_kraus(kraus, post, registers=range(m, n))
    return p, post


def _final_branches(code: FeedbackCode, state: DensityMatrix, history: tuple) -> dict:
    povm = _padded_povm(code.measurement(code.n, history), code.dims, code.n)
    return measure(povm, state)


def _walk(code: FeedbackCode, word, cap: int = ENUM_CAP):
    """Yield (outcomes, probability, states) over all intermediate histories.

    Probability is conditional on the word; states collect omega^0..omega^{n-1}.
    """
    n = code.n
    frontier = [((), 1.0, (round_zero(code, word),))]
    for m in range(2, n + 1):
        new = []
        for history, p_path, states in frontier:
            povm = _padded_povm(code.measurement(m - 1, history), code.dims, m - 1)
            sigma = apply_channel_at(code.channel, states[-1], m - 1)
            for outcome, (p, post) in measure(povm, sigma).items():
                if p_path * p < PROB_FLOOR:
                    continue
                kraus = code.feedback_kraus(m, outcome)
                if kraus is not None and m < n:
                    post = apply_kraus(kraus, post, registers=range(m, n))
                new.append((history + (outcome,), p_path * p, states + (post,)))
            if len(new) > cap:
                raise CapExceededError(f"transcript enumeration exceeded {cap} branches")
        frontier = new
    return frontier


def enumerate_transcripts(code: FeedbackCode, word, cap: int = ENUM_CAP) -> list[ProtocolTranscript]:
    """Exact expansion of the round recursion over all outcome sequences."""
    word = tuple(int(x) for x in word)
    out = []
    for history, p_path, states in _walk(code, word, cap):
        for k_n, (p, _post) in _final_branches(code, states[-1], history).items():
            prob = p_path * p
            if prob < PROB_FLOOR:
                continue
            outcomes = history + (k_n,)
            out.append(
                ProtocolTranscript(word, outcomes, prob, states, decode_outcomes(code, outcomes))
            )
            if len(out) > cap:
                raise CapExceededError(f"transcript enumeration exceeded {cap} branches")
    return out


def sample_transcript(code: FeedbackCode, word, rng) -> ProtocolTranscript:
    """Draw one transcript; reproducible for a seeded generator."""
    if isinstance(rng, int):
        rng = np.random.default_rng(rng)
    word = tuple(int(x) for x in word)
    n = code.n
    history: tuple = ()
    states = (round_zero(code, word),)
    prob = 1.0
    for m in range(2, n + 1):
        povm = _padded_povm(code.measurement(m - 1, history), code.dims, m - 1)
        sigma = apply_channel_at(code.channel, states[-1], m - 1)
        branches = measure(povm, sigma)
        labels = list(branches)
        weights = np.array([branches[k][0] for k in labels])
        pick = labels[int(rng.choice(len(labels), p=weights / weights.sum()))]
        p, post = branches[pick]
        kraus = code.feedback_kraus(m, pick)
        if kraus is not None and m < n:
            post = apply_kraus(kraus, post, registers=range(m, n))
        history += (pick,)
        states += (post,)
        prob *= p
    finals = _final_branches(code, states[-1], history)
    labels = list(finals)
    weights = np.array([finals[k][0] for k in labels])
    pick = labels[int(rng.choice(len(labels), p=weights / weights.sum()))]
    prob *= finals[pick][0]
    outcomes = history + (pick,)
    return ProtocolTranscript(word, outcomes, prob, states, decode_outcomes(code, outcomes))


def ehs_states(code: FeedbackCode, up_to: int | None = None) -> list[CqState]:
    """EHS states for t = 0..up_to (default n-1) from one shared walk.

    Classical registers: A_1..A_n holding the codeword letters and
    X_1..X_{n-1} holding recorded outcomes (0 = not yet recorded, outcome k
    of M_j stored as its index + 1).  The quantum part of state t is
    omega^t, in which registers 0..t have passed through the channel.
    """
    n = code.n
    up_to = n - 1 if up_to is None else up_to
    if not 0 <= up_to <= n - 1:
        raise ValidationError(f"EHS time {up_to} out of range 0..{n - 1}")
    x_sizes = [len(code.outcome_labels(j)) + 1 for j in range(1, n)]
    regs = tuple((f"A{i + 1}", code.codebook.alphabet) for i in range(n)) + tuple(
        (f"X{j + 1}", x_sizes[j]) for j in range(n - 1)
    )

    def labelled(word, history):
        xs = [code.outcome_labels(j + 1).index(k) + 1 for j, k in enumerate(history)]
        xs += [0] * (n - 1 - len(xs))
        return word + tuple(xs)

    per_time: list[list] = [[] for _ in range(up_to + 1)]
    for idx, word in enumerate(code.codebook.words):
        p_word = code.probs[idx]
        if p_word < PROB_FLOOR:
            continue
        frontier = [((), 1.0, round_zero(code, word))]
        for history, p_path, state in frontier:
            per_time[0].append((labelled(word, history), p_word * p_path, state))
        for t in range(1, up_to + 1):
            m = t + 1  # update m performs measurement M_{t}
            new = []
            for history, p_path, state in frontier:
                povm = _padded_povm(code.measurement(m - 1, history), code.dims, m - 1)
                sigma = apply_channel_at(code.channel, state, m - 1)
                for outcome, (p, post) in measure(povm, sigma).items():
                    if p_path * p < PROB_FLOOR:
                        continue
                    kraus = code.feedback_kraus(m, outcome)
                    if kraus is not None and m < n:
                        post = apply_kraus(kraus, post, registers=range(m, n))
                    new.append((history + (outcome,), p_path * p, post))
                if len(new) > ENUM_CAP:
                    raise CapExceededError(f"EHS enumeration exceeded {ENUM_CAP} branches")
            frontier = new
            for history, p_path, state in frontier:
                per_time[t].append((labelled(word, history), p_word * p_path, state))
    return [CqState(regs, code.dims, prune_branches(b)) for b in per_time]


def ehs_state(code: FeedbackCode, t: int) -> CqState:
    """Joint classical-quantum state after t measured rounds (see ehs_states)."""
    return ehs_states(code, up_to=t)[t]


def outcome_chain(code: FeedbackCode, cap: int = ENUM_CAP) -> dict:
    """Joint distribution over (codeword, full outcome tuple)."""
    chain: dict = {}
    for idx, word in enumerate(code.codebook.words):
        p_word = code.probs[idx]
        if p_word < PROB_FLOOR:
            continue
        for tr in enumerate_transcripts(code, word, cap):
            chain[(word, tr.outcomes)] = chain.get((word, tr.outcomes), 0.0) + p_word * tr.probability
    return chain


def error_probability(code: FeedbackCode, cap: int = ENUM_CAP) -> tuple[float, float]:
    """(average error, maximal error) over codewords under the stored decode rule."""
    worst = 0.0
    avg = 0.0
    for idx, word in enumerate(code.codebook.words):
        p_correct = 0.0
        for tr in enumerate_transcripts(code, word, cap):
            if tr.decoded == word:
                p_correct += tr.probability
        err = 1.0 - p_correct
        worst = max(worst, err)
        avg += code.probs[idx] * err
    return avg, worst


def markov_check(code: FeedbackCode, message_map: dict | None = None, cap: int = ENUM_CAP) -> float:
    """Largest violation of P(K_n | K_1^{n-1}, word, message) = P(K_n | K_1^{n-1}, word).

    message_map sends message labels to codewords (default: one message per
    codeword); messages mapping to the same word must induce identical
    conditional outcome laws.
    """
    if message_map is None:
        message_map = {i: w for i, w in enumerate(code.codebook.words)}
    words = {tuple(w) for w in message_map.values()}
    per_word: dict[tuple, dict] = {}
    for word in words:
        cond: dict = {}
        for tr in enumerate_transcripts(code, word, cap):
            cond[tr.outcomes] = cond.get(tr.outcomes, 0.0) + tr.probability
        per_word[word] = cond
    # With the word fixed, the law cannot depend on the message by construction;
    # measure it honestly by comparing the per-message conditionals anyway.
    worst = 0.0
    for word in words:
        msgs = [m for m, w in message_map.items() if tuple(w) == word]
        laws = []
        for _ in msgs:
            laws.append(per_word[word])
        base = laws[0]
        for law in laws[1:]:
            keys = set(base) | set(law)
            for k in keys:
                worst = max(worst, abs(base.get(k, 0.0) - law.get(k, 0.0)))
    return worst


# ----------------------------------------------------------------------------
# Random code generation (tests, lemma suites, optimizer seeds).


def pgm_decoder(states: list[DensityMatrix], weights, labels) -> Povm:
    """Pretty-good-measurement decoder as a complete Povm.

    Elements are sqrt(R_w) for R_w = T^(-1/2) p_w rho_w T^(-1/2); the defect
    from completeness on the full space is routed to the 'er' outcome.
    """
    dim = states[0].dim
    t = sum(p * rho.mat for p, rho in zip(weights, states))
    t_inv = pinv_sqrt(t)
    els = []
    acc = np.zeros((dim, dim), dtype=complex)
    for lab, p, rho in zip(labels, weights, states):
        r = t_inv @ (p * rho.mat) @ t_inv
        acc += r
        els.append((lab, psd_sqrt(r)))
    rem = identity(dim) - acc
    els.append((ER, psd_sqrt(0.5 * (rem + rem.conj().T))))
    return Povm(tuple(els))


def random_feedback_code(
    rng: np.random.Generator,
    channel: QuantumChannel,
    n: int,
    num_words: int = 2,
    alphabet: int = 2,
    outcomes: int = 2,
    feedback: bool = True,
    pure_letters: bool = False,
    projective: bool = True,
) -> FeedbackCode:
    """Random n-block feedback code over letter-keyed product codeword states.

    Intermediate measurements act on the freshest channel output only and
    post-processing maps are products of outcome-conditioned unitaries, so
    the directed data-processing inequality holds for every draw.  With
    ``projective`` the intermediate measurements are rank-1 rotated basis
    projectors; their outcome stays recoverable from the post-measurement
    state, which additionally makes I(M:K_1^n) <= I(M:Z_1^n) hold on every
    draw.  Non-projective measurement operators can dump information into
    the classical record that the disturbed state no longer carries.
    """
    d = channel.in_dim
    all_words = []

    def grow(prefix):
        if len(prefix) == n:
            all_words.append(tuple(prefix))
            return
        for a in range(alphabet):
            grow(prefix + [a])

    grow([])
    if num_words > len(all_words):
        raise ValidationError("more codewords than strings")
    order = rng.permutation(len(all_words))
    words = tuple(all_words[i] for i in order[:num_words])
    book = Codebook(alphabet, n, words)

    probs = rng.dirichlet(np.ones(num_words)) * 0.8 + 0.2 / num_words
    probs = tuple(float(p) for p in probs / probs.sum())

    letter_states = [
        random_pure_state(rng, d) if pure_letters else random_density_matrix(rng, d)
        for _ in range(alphabet)
    ]
    states = []
    for w in words:
        mat = letter_states[w[0]].mat
        for a in w[1:]:
            mat = kron(mat, letter_states[a].mat)
        states.append(DensityMatrix(mat, (d,) * n))

    measurements = []
    for j in range(1, n):
        if projective:
            u = random_unitary(rng, d)
            single = Povm(tuple((k, np.outer(u[:, k], u[:, k].conj())) for k in range(d)))
        else:
            single = random_povm(rng, d, outcomes)
        pad = identity(d ** (j - 1))
        els = tuple((lab, kron(pad, f)) for lab, f in single.elements)
        measurements.append(Povm(els))

    fb: dict = {}
    if feedback:
        for m in range(2, n):
            per = {}
            for k in range(outcomes):
                u = random_unitary(rng, d)
                for _ in range(m + 1, n):
                    u = kron(u, random_unitary(rng, d))
                per[k] = (u,)
            fb[m] = per

    # Final decoder: PGM over the average pre-decode outputs per word.
    partial = FeedbackCode(book, channel, probs, tuple(states), tuple(measurements) + (None,), fb)
    finals = []
    for w in words:
        acc = None
        for history, p_path, sts in _walk(partial, w):
            acc = p_path * sts[-1].mat if acc is None else acc + p_path * sts[-1].mat
        finals.append(DensityMatrix(acc / np.trace(acc).real, (d,) * n))
    m_n = pgm_decoder(finals, probs, list(words))
    measurements.append(m_n)

    return FeedbackCode(book, channel, probs, tuple(states), tuple(measurements), fb)
