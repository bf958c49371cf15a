"""Quantum directed information and the converse-bound chain.

The t-th term I_t(A_1^t : Z_t | Z_1^{t-1}) is evaluated on the joint state in
which the t-th channel output is fresh: t registers have passed through the
channel and the first t-1 intermediate measurements have been recorded
(``ehs_state(code, t-1)``).  The related single-state variant evaluates every
term on the final pre-decoding state instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cqstate import conditional_mutual_information
from .protocol import (
    ENUM_CAP,
    FeedbackCode,
    ehs_state,
    ehs_states,
    enumerate_transcripts,
    error_probability,
)
from .quantum import PROB_FLOOR, DensityMatrix, ValidationError, entropy_of, shannon


@dataclass(frozen=True)
class RateReport:
    """Converse-chain numbers for one feedback code."""

    n: int
    num_messages: int
    per_round: tuple[float, ...]
    directed_total: float
    directed_final: float
    i_message_quantum: float  # I(M : Z_1^n)
    i_message_classical: float  # I(M : K_1^n)
    rate: float  # log2(N) / n
    avg_error: float
    max_error: float
    epsilon_n: float  # (1 + P_e n R) / n
    fano_bound: float  # epsilon_n + I(M:K_1^n)/n
    h_message_rate: float  # H(M) / n

    def check(self, tol: float = 1e-9) -> None:
        if any(x < -tol for x in self.per_round):
            raise ValidationError("negative per-round information term")
        if abs(self.directed_total - sum(self.per_round)) > 1e-12:
            raise ValidationError("directed total does not match its terms")


def _directed_parts(t: int):
    part_a = tuple(f"A{i}" for i in range(1, t + 1))
    part_b = (t - 1,)
    part_c = tuple(range(t - 1))
    return part_a, part_b, part_c


def directed_terms(code: FeedbackCode) -> list[float]:
    """Per-round terms, each on its own protocol-time state."""
    states = ehs_states(code)
    terms = []
    for t in range(1, code.n + 1):
        a, b, c = _directed_parts(t)
        terms.append(conditional_mutual_information(states[t - 1], a, b, c))
    return terms


def directed_information_total(code: FeedbackCode) -> float:
    return float(sum(directed_terms(code)))


def directed_information_final(code: FeedbackCode) -> float:
    """All terms evaluated on the final pre-decoding state."""
    s = ehs_state(code, code.n - 1)
    total = 0.0
    for t in range(1, code.n + 1):
        a, b, c = _directed_parts(t)
        total += conditional_mutual_information(s, a, b, c)
    return float(total)


def _message_table(code: FeedbackCode, message_map, message_probs):
    if message_map is None:
        message_map = {i: w for i, w in enumerate(code.codebook.words)}
    message_map = {m: tuple(int(x) for x in w) for m, w in message_map.items()}
    for w in message_map.values():
        code.word_index(w)
    msgs = sorted(message_map)
    if message_probs is None:
        probs = {m: code.probs[code.word_index(message_map[m])] for m in msgs}
        total = sum(probs.values())
        probs = {m: p / total for m, p in probs.items()}
    else:
        probs = {m: float(message_probs[m]) for m in msgs}
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ValidationError("message probabilities do not sum to 1")
    return message_map, msgs, probs


def average_final_state(code: FeedbackCode, word) -> DensityMatrix:
    """Receiver's pre-decoding state for one codeword, averaged over outcomes."""
    from .protocol import _walk

    acc = None
    for _hist, p, states in _walk(code, word):
        acc = p * states[-1].mat if acc is None else acc + p * states[-1].mat
    return DensityMatrix(acc / np.trace(acc).real, code.dims)


def message_information(
    code: FeedbackCode,
    message_map: dict | None = None,
    message_probs=None,
    cap: int = ENUM_CAP,
) -> tuple[float, float]:
    """(I(M : Z_1^n), I(M : K_1^n)) for a message-to-codeword assignment.

    The quantum term is the Holevo information of the ensemble of averaged
    final states; the classical term is Shannon mutual information of the
    message-outcome joint law.
    """
    message_map, msgs, probs = _message_table(code, message_map, message_probs)

    word_avg = {w: average_final_state(code, w) for w in {message_map[m] for m in msgs}}
    rho_m = {m: word_avg[message_map[m]] for m in msgs}
    avg = sum(probs[m] * rho_m[m].mat for m in msgs)
    i_mz = entropy_of(avg) - sum(
        probs[m] * entropy_of(rho_m[m].mat) for m in msgs if probs[m] > PROB_FLOOR
    )

    cond = {}
    for w in {message_map[m] for m in msgs}:
        law: dict = {}
        for tr in enumerate_transcripts(code, w, cap):
            law[tr.outcomes] = law.get(tr.outcomes, 0.0) + tr.probability
        cond[w] = law
    h_k_given_m = sum(probs[m] * shannon(cond[message_map[m]].values()) for m in msgs)
    marginal: dict = {}
    for m in msgs:
        for k, p in cond[message_map[m]].items():
            marginal[k] = marginal.get(k, 0.0) + probs[m] * p
    i_mk = shannon(marginal.values()) - h_k_given_m
    return float(max(i_mz, 0.0) if abs(i_mz) < 1e-14 else i_mz), float(i_mk)


def verify_ddpi(code: FeedbackCode, message_map: dict | None = None, message_probs=None):
    """Directed data-processing inequality: I(M:Z_1^n) <= I(A_1^n -> Z_1^n).

    Returns (lhs, rhs, slack); the inequality holds when slack >= 0 up to
    numerical tolerance.  Defaults to one message per codeword, weighted by
    the input ensemble so both sides describe the same joint state.
    """
    lhs, _ = message_information(code, message_map, message_probs)
    rhs = directed_information_total(code)
    return lhs, rhs, rhs - lhs


def fano_bound(
    code: FeedbackCode,
    rate: float | None = None,
    message_map: dict | None = None,
    message_probs=None,
) -> float:
    """(1 + P_e n R + I(M:K_1^n)) / n in bits, the converse's outer bound."""
    message_map, msgs, probs = _message_table(code, message_map, message_probs)
    if rate is None:
        rate = np.log2(len(msgs)) / code.n if len(msgs) > 1 else 0.0
    _, i_mk = message_information(code, message_map, probs)
    p_err = _message_error(code, message_map, probs)
    return float((1.0 + p_err * code.n * rate + i_mk) / code.n)


def _message_error(code: FeedbackCode, message_map, probs) -> float:
    err = 0.0
    for m, w in message_map.items():
        p_correct = 0.0
        for tr in enumerate_transcripts(code, w):
            if tr.decoded == w:
                p_correct += tr.probability
        err += probs[m] * (1.0 - p_correct)
    return err


def rate_report(code: FeedbackCode, uniform_messages: bool = True) -> RateReport:
    """Full converse-chain report for one code.

    Messages default to one per codeword with a uniform law (the source model
    used for the error exponent); set ``uniform_messages=False`` to weight
    messages by the input ensemble instead.
    """
    n = code.n
    num = code.codebook.size
    message_map = {i: w for i, w in enumerate(code.codebook.words)}
    if uniform_messages:
        probs = {i: 1.0 / num for i in range(num)}
    else:
        probs = None

    terms = directed_terms(code)
    total = float(sum(terms))
    final = directed_information_final(code)
    i_mz, i_mk = message_information(code, message_map, probs)
    _map, _msgs, probs_resolved = _message_table(code, message_map, probs)
    p_err = _message_error(code, message_map, probs_resolved)
    avg_err, max_err = error_probability(code)
    rate = float(np.log2(num) / n) if num > 1 else 0.0
    eps = (1.0 + p_err * n * rate) / n
    fano = eps + i_mk / n
    h_m = shannon(probs_resolved.values()) / n
    report = RateReport(
        n=n,
        num_messages=num,
        per_round=tuple(float(x) for x in terms),
        directed_total=total,
        directed_final=float(final),
        i_message_quantum=float(i_mz),
        i_message_classical=float(i_mk),
        rate=rate,
        avg_error=float(avg_err),
        max_error=float(max_err),
        epsilon_n=float(eps),
        fano_bound=float(fano),
        h_message_rate=float(h_m),
    )
    report.check()
    return report
