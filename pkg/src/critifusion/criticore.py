"""Prompt critique: hints, clause decomposition, committees, scoring, merge.

The offline path is fully analytic: the VLM stand-in reads pattern
coefficients straight off the image, mock agents speak the shared
descriptor vocabulary, and the clause scorer is 1 / (1 + MSE) against a
unit target coefficient per clause.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import vocab
from .agents import make_request
from .basis import N_BASIS, pattern_coefficient
from .diffusion import Conditioning
from .latents import LatentField

HINT_THRESHOLD = 0.1
CLAUSE_KINDS = ("entity", "attribute", "relation")
DEFAULT_BUDGET = 77


class EmptyInputError(ValueError):
    pass


class CommitteeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    """Ordered tokens with per-token salience under a token budget."""

    tokens: tuple
    salience: tuple
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if len(self.tokens) != len(self.salience):
            raise ValueError("tokens and salience must have equal length")
        if len(self.tokens) > self.budget:
            raise ValueError(
                f"token count {len(self.tokens)} exceeds budget {self.budget}"
            )
        if any(not (0.0 <= w <= 1.0) for w in self.salience):
            raise ValueError("salience weights must lie in [0, 1]")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def make_prompt_bundle(
    text: str, budget: int = DEFAULT_BUDGET, base_salience: float = 0.5
) -> PromptBundle:
    tokens = vocab.tokenize(text)[:budget]
    return PromptBundle(tuple(tokens), tuple(base_salience for _ in tokens), budget)


def conditioning_from_prompt(
    bundle: PromptBundle, guidance_scale: float = 0.0
) -> Conditioning:
    """Binary basis weights: 1 for every descriptor the prompt mentions."""
    weights = np.zeros(N_BASIS)
    for j in vocab.descriptor_indices(bundle.tokens):
        weights[j] = 1.0
    return Conditioning(weights, guidance_scale)


@dataclass(frozen=True)
class Clause:
    """One grounded visual clause tied to a basis pattern."""

    clause_id: int
    text: tuple
    kind: str
    score: float | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("clause text must be nonempty")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError("clause score must lie in [0, 1]")


@dataclass(frozen=True)
class CritiqueReport:
    hints: tuple
    clauses: tuple
    mean_score: float
    transcript: tuple

    def __post_init__(self):
        scores = [c.score for c in self.clauses if c.score is not None]
        if scores and abs(self.mean_score - sum(scores) / len(scores)) > 1e-12:
            raise ValueError("mean score inconsistent with clause scores")


@dataclass(frozen=True)
class CommitteeConfig:
    mode: str = "moa"
    agents: int = 3
    rounds: int = 1
    layer_widths: tuple = (3,)
    k_edit: int = 5
    k_hints: int = 5

    def __post_init__(self):
        if self.mode not in ("mad", "moa"):
            raise CommitteeConfigError(f"mode must be 'mad' or 'moa', got {self.mode!r}")
        if self.mode == "mad":
            if self.agents < 1 or self.rounds < 1:
                raise CommitteeConfigError("MAD needs agents >= 1 and rounds >= 1")
        else:
            if not self.layer_widths or any(n < 1 for n in self.layer_widths):
                raise CommitteeConfigError("MoA needs at least one layer, widths >= 1")
        if self.k_edit < 0 or self.k_hints < 1:
            raise CommitteeConfigError("k_edit must be >= 0 and k_hints >= 1")

    @property
    def width(self) -> int:
        return self.agents if self.mode == "mad" else self.layer_widths[0]


def vlm_hints(
    image: LatentField, prompt: PromptBundle, backend=None, k_hints: int = 5
) -> list[str]:
    """Grounded hints: where the image's pattern coefficients miss the prompt.

    Every basis pattern is checked against its desired coefficient (1 when
    the prompt names it, 0 otherwise); mismatches above threshold become
    hints, largest first, at most k_hints.  A non-mock backend would be
    consulted here instead; the analytic diff is the offline VLM.
    """
    if k_hints < 1:
        raise ValueError("k_hints must be >= 1")
    wanted = set(vocab.descriptor_indices(prompt.tokens))
    mismatches = []
    for j in range(N_BASIS):
        coef = pattern_coefficient(image.values, j)
        desired = 1.0 if j in wanted else 0.0
        gap = abs(coef - desired)
        if gap > HINT_THRESHOLD:
            verb = "increase" if coef < desired else "reduce"
            mismatches.append((gap, j, f"{verb} {vocab.CANONICAL_NAMES[j]}"))
    mismatches.sort(key=lambda m: (-m[0], m[1]))
    return [text for _, _, text in mismatches[:k_hints]]


def decompose_clauses(
    prompt: PromptBundle, hints, committee: CommitteeConfig, backend
) -> list[Clause]:
    """Fan the instruction out to the committee proposers; union the clauses."""
    if not prompt.tokens:
        raise EmptyInputError("prompt has no tokens")
    instruction = " ".join(list(prompt.tokens) + vocab.tokenize(" ".join(hints)))
    seen: list[int] = []
    for agent_id in range(1, committee.width + 1):
        resp = backend.respond(agent_id, make_request("propose", instruction))
        for j in vocab.descriptor_indices(vocab.tokenize(resp.text)):
            if j not in seen:
                seen.append(j)
    return [
        Clause(
            clause_id=j,
            text=(vocab.CANONICAL_NAMES[j],),
            kind=CLAUSE_KINDS[j % len(CLAUSE_KINDS)],
        )
        for j in seen
    ]


def mad_round(state, committee: CommitteeConfig, backend, instruction: str):
    """One debate round: each agent sees all other agents' prior outputs."""
    if committee.mode != "mad":
        raise CommitteeConfigError("mad_round requires MAD mode")
    outputs = []
    for i in range(1, committee.agents + 1):
        context_lines = [
            f"agent {j}: {state[j - 1]}"
            for j in range(1, committee.agents + 1)
            if j != i and state[j - 1]
        ]
        text = "\n".join([instruction] + context_lines)
        resp = backend.respond(i, make_request("propose", text))
        outputs.append(resp.text)
    return outputs


def judge(candidates, backend) -> str:
    """Pick the final answer from the round's candidates (one backend call)."""
    candidates = list(candidates)
    if not candidates:
        raise EmptyInputError("judge needs at least one candidate")
    resp = backend.respond(0, make_request("judge", "\n".join(candidates)))
    return resp.text


def run_mad(instruction: str, committee: CommitteeConfig, backend) -> str:
    """T debate rounds then judging; exactly agents * rounds + 1 calls."""
    state = ["" for _ in range(committee.agents)]
    for _ in range(committee.rounds):
        state = mad_round(state, committee, backend, instruction)
    return judge(state, backend)


def moa_aggregate(instruction: str, committee: CommitteeConfig, backend) -> str:
    """Layered committee: proposers then an aggregator per layer.

    Layer l proposers see [instruction; previous synthesis]; the mock
    aggregator emits the ordered dedup-union of the layer's candidates.
    Total calls are sum over layers of (width + 1).
    """
    if committee.mode != "moa":
        raise CommitteeConfigError("moa_aggregate requires MoA mode")
    synthesis = instruction
    for width in committee.layer_widths:
        candidates = []
        for j in range(1, width + 1):
            text = instruction if synthesis == instruction else f"{instruction}\n{synthesis}"
            resp = backend.respond(j, make_request("propose", text))
            candidates.append(resp.text)
        agg = backend.respond(0, make_request("aggregate", " ".join(candidates)))
        synthesis = agg.text
    return synthesis


def score_clauses(
    clauses,
    image: LatentField,
    backend=None,
    hints=(),
    transcript=(),
) -> CritiqueReport:
    """Score every clause as 1 / (1 + MSE) against its unit coefficient."""
    clauses = list(clauses)
    if not clauses:
        raise EmptyInputError("no clauses to score")
    scored = []
    for clause in clauses:
        coef = pattern_coefficient(image.values, clause.clause_id)
        mse = (coef - 1.0) ** 2
        scored.append(replace(clause, score=1.0 / (1.0 + mse)))
    mean = sum(c.score for c in scored) / len(scored)
    return CritiqueReport(
        hints=tuple(hints),
        clauses=tuple(scored),
        mean_score=mean,
        transcript=tuple(transcript),
    )


def merge_topk(
    base: PromptBundle, clauses, k_edit: int, budget: int | None = None
) -> PromptBundle:
    """Append the k_edit lowest-scoring clauses, then enforce the budget.

    Over budget, appended tokens that duplicate an earlier token are
    pruned first; after that, the lowest-salience tokens go (ties resolved
    from the end), so base filler is dropped before fresh edits.
    """
    if k_edit < 0:
        raise ValueError("k_edit must be >= 0")
    K = base.budget if budget is None else budget
    scored = [c for c in clauses if c.score is not None]
    scored.sort(key=lambda c: (c.score, c.clause_id))
    selected = scored[:k_edit]

    entries = [
        {"token": t, "salience": s, "appended": False}
        for t, s in zip(base.tokens, base.salience)
    ]
    for clause in selected:
        for token in clause.text:
            entries.append(
                {"token": token, "salience": 1.0 - clause.score, "appended": True}
            )

    # Phase 1: drop appended exact duplicates.
    i = 0
    while len(entries) > K and i < len(entries):
        e = entries[i]
        if e["appended"] and any(
            other["token"] == e["token"] for other in entries[:i]
        ):
            entries.pop(i)
        else:
            i += 1
    # Phase 2: drop lowest-salience tokens until the budget holds.
    while len(entries) > K:
        victim = min(
            range(len(entries)),
            key=lambda idx: (entries[idx]["salience"], -idx),
        )
        entries.pop(victim)

    return PromptBundle(
        tuple(e["token"] for e in entries),
        tuple(e["salience"] for e in entries),
        K,
    )
