"""Uniform backend gateway for the three model roles: policy, evaluator, judge.

Every call runs under a hard wall-clock deadline (deadline + <=20 ms grace),
including against hung backends; a breach raises GatewayTimeout, which the
dialogue manager maps to its fallback path, never to a fabricated answer.

Two backend kinds exist: a deterministic seeded mock (the test harness) and a
remote JSON-over-HTTP backend (protocol in docs/wire.md). Mock tokenization is
whitespace splitting; the scoring math downstream is tokenizer-agnostic.
"""

from __future__ import annotations

import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

from .fsm import FsmGraph, OptionSet, candidate_options
from .templates import split_cot_and_label

logger = logging.getLogger(__name__)

ROLES = ("policy", "evaluator", "judge")
KINDS = ("mock", "remote")

# floor applied when a backend reports probability 0 for a target token;
# a single hard zero would otherwise annihilate the whole sequence score
PROBABILITY_FLOOR = 1e-12
DEADLINE_GRACE_MS = 20


class GatewayError(Exception):
    pass


class GatewayTimeout(GatewayError):
    pass


class BackendUnavailable(GatewayError):
    pass


class ProtocolError(GatewayError):
    pass


class ScoringUnsupported(GatewayError):
    pass


@dataclass(frozen=True)
class BackendProfile:
    """Configuration for one backend; identifier doubles as the policy id."""

    role: str
    kind: str
    identifier: str
    deadline_ms: int | None = None
    endpoint: str | None = None
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.deadline_ms is None:
            object.__setattr__(self, "deadline_ms", 200 if self.role == "policy" else 1000)
        if self.deadline_ms <= 0:
            raise ValueError("deadline_ms must be positive")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")


def profile_from_dict(data: dict) -> BackendProfile:
    options = dict(data.get("options", {}))
    script_file = options.pop("script_file", None)
    if script_file:
        # behavior options may live in a separate file; inline keys win
        import json

        with open(script_file, encoding="utf-8") as fh:
            options = {**json.load(fh), **options}
    return BackendProfile(
        role=data["role"],
        kind=data.get("kind", "mock"),
        identifier=data.get("identifier", f"{data['role']}-backend"),
        deadline_ms=data.get("deadline_ms"),
        endpoint=data.get("endpoint"),
        seed=data.get("seed", 0),
        options=options,
    )


@dataclass(frozen=True)
class TokenScore:
    token: str
    probability: float


@dataclass(frozen=True)
class JudgeVerdict:
    label: str  # correct | incorrect | uncertain
    rationale: str
    prompt_version: str


def _run_with_deadline(fn, deadline_ms: int, what: str):
    """Run fn in a daemon worker; give up after the deadline elapses.

    The worker may keep running after a timeout (it cannot be killed), but the
    caller is released within the deadline plus scheduling jitter (<= grace).
    """
    outcome: list[tuple[str, object]] = []
    done = threading.Event()

    def _worker():
        try:
            outcome.append(("ok", fn()))
        except BaseException as exc:  # propagated to the caller below
            outcome.append(("error", exc))
        finally:
            done.set()

    thread = threading.Thread(target=_worker, daemon=True, name="gateway-call")
    thread.start()
    if not done.wait(deadline_ms / 1000.0):
        raise GatewayTimeout(f"{what} exceeded deadline of {deadline_ms} ms")
    kind, value = outcome[0]
    if kind == "error":
        raise value  # type: ignore[misc]
    return value


# --- canonical-prompt introspection used by mock oracles ---------------------


def _parse_prompt(prompt: str) -> tuple[list[tuple[str, str]], str | None]:
    """Recover (label, query) options and the last user reply from a v1 prompt."""
    options: list[tuple[str, str]] = []
    last_user: str | None = None
    in_options = False
    for line in prompt.splitlines():
        if line == "Reply options:":
            in_options = True
            continue
        if in_options:
            if len(line) > 2 and line[0].isupper() and line[1:3] == ". ":
                options.append((line[0], line[3:]))
            else:
                in_options = False
        elif line.startswith("User: "):
            last_user = line[len("User: "):]
    return options, last_user


def _parse_eval_prompt(eval_prompt: str) -> tuple[str, str]:
    """Split an evaluation prompt back into (inner prompt, candidate output)."""
    marker = "\nProposed agent output: "
    head, _, tail = eval_prompt.rpartition(marker)
    if not head:
        raise ProtocolError("not an evaluation prompt")
    output = tail.rsplit("\nIs the selected option correct", 1)[0]
    prompt = head.split("Review this telephone-agent exchange.\n", 1)[-1]
    return prompt, output


def _parse_judge_prompt(judge_prompt: str) -> tuple[str, str, str]:
    """Split a judge prompt into (criteria body, conversation, candidate output)."""
    body, _, rest = judge_prompt.partition("\nConversation:\n")
    convo, _, tail = rest.rpartition("\nAgent output: ")
    output = tail.rsplit("\nVerdict:", 1)[0]
    return body, convo, output


class FsmOracle:
    """Ground-truth resolver: maps a rendered prompt back to the correct option.

    Identifies the state by its option block (labels and queries are unique per
    state in practice) and the taken transition by exact reply-variant match.
    Noise-perturbed replies do not match and resolve to None.
    """

    def __init__(self, graph: FsmGraph):
        self.graph = graph
        self._by_signature: dict[tuple, str] = {}
        for state in graph.states:
            opts = candidate_options(graph, state.id)
            sig = tuple((o.label, o.agent_query) for o in opts.options)
            self._by_signature.setdefault(sig, state.id)

    def resolve(self, prompt: str) -> tuple[OptionSet | None, str | None]:
        """Return (options of the current state, correct label or None)."""
        parsed_options, last_user = _parse_prompt(prompt)
        state = self._by_signature.get(tuple(parsed_options))
        if state is None:
            return None, None
        options = candidate_options(self.graph, state)
        if last_user is None:
            return options, None
        for index, transition in enumerate(self.graph.outgoing[state]):
            if last_user in transition.reply_variants:
                return options, options.options[index].label
        return options, None

    def describe(self, state_options: OptionSet, label: str) -> tuple[str, str | None]:
        """(reply_class, goal attribute) for a resolved label."""
        index = ord(label) - ord("A")
        transition = self.graph.outgoing[state_options.state][index]
        goal = self.graph.states_by_id[transition.target].attribute
        return transition.reply_class, goal


def _invalid_label(options: list[tuple[str, str]] | OptionSet) -> str:
    count = len(options.options) if isinstance(options, OptionSet) else len(options)
    return chr(ord("A") + count) if count < 26 else "0"


class MockBackend:
    """Deterministic scripted backend; behavior selected by profile options.

    Identical (seed, config, call sequence) yields identical outputs. The RNG
    and call counters are guarded so concurrent calls serialize per instance.
    """

    def __init__(self, profile: BackendProfile, graph: FsmGraph | None = None):
        self.profile = profile
        self.options = profile.options
        self._rng = random.Random(profile.seed)
        self._lock = threading.Lock()
        self._calls = 0
        self._score_calls = 0
        self._oracle = FsmOracle(graph) if graph is not None else None

    def _require_oracle(self) -> FsmOracle:
        if self._oracle is None:
            raise ProtocolError("mock behavior requires an FSM graph")
        return self._oracle

    def _check_availability(self):
        fail_after = self.options.get("fail_after")
        if fail_after is not None and self._calls > fail_after:
            raise BackendUnavailable(f"scripted outage after {fail_after} calls")

    # -- complete ------------------------------------------------------------

    def complete(self, prompt: str) -> str:
        with self._lock:
            self._calls += 1
            self._check_availability()
            behavior = self.options.get("behavior", "script")
            if behavior == "hang":
                time.sleep(self.options.get("hang_ms", 5000) / 1000.0)
                return "late"
            if behavior == "script":
                for rule in self.options.get("rules", []):
                    if rule["contains"] in prompt:
                        return rule["text"]
                return self.options.get("default", "A")
            if behavior == "oracle":
                return self._oracle_complete(prompt)
            if behavior == "adversarial":
                return self._adversarial_complete(prompt)
            if behavior == "judge":
                return self._judge_complete(prompt)
            raise ProtocolError(f"unknown mock behavior {behavior!r}")

    def _oracle_complete(self, prompt: str) -> str:
        oracle = self._require_oracle()
        options, label = oracle.resolve(prompt)
        if options is None or not options.options:
            return "No options recognized."
        if label is None:
            guess = options.labels[self._rng.randrange(len(options.labels))]
            return f"User's reply is unclear; choosing the most likely follow-up. {guess}"
        reply_class, goal = oracle.describe(options, label)
        return f"User's reply taken as {reply_class}; next goal is {goal or 'wrap-up'}. {label}"

    def _adversarial_complete(self, prompt: str) -> str:
        p_invalid = self.options.get("invalid_label_probability", 0.3)
        if self._rng.random() < p_invalid:
            parsed_options, _ = _parse_prompt(prompt)
            return f"Picking something else entirely. {_invalid_label(parsed_options)}"
        return self._oracle_complete(prompt)

    def _judge_complete(self, judge_prompt: str) -> str:
        if "always" in self.options:
            return {"correct": "True.", "incorrect": "False: scripted."}[self.options["always"]]
        if "always_text" in self.options:
            return self.options["always_text"]
        body, convo, output = _parse_judge_prompt(judge_prompt)
        if "cues" in self.options:
            # a criteria-driven judge: a cue only fires when the active prompt
            # version lists its criterion; anything else passes
            for rule in self.options["cues"]:
                if rule["cue"] in convo and rule["criterion"] in body:
                    return f"False: matched criterion '{rule['criterion']}'."
            return "True."
        if self._oracle is not None:
            options, label = self._oracle.resolve(convo)
            if options is not None and label is not None:
                _, chosen = split_cot_and_label(output)
                if chosen == label:
                    return "True."
                return "False: selected option does not match the user's reply."
            return "Unclear."
        return "True."

    # -- scoring (evaluator role) ---------------------------------------------

    def score(self, prompt: str, target: str) -> list[tuple[str, float]]:
        tokens = target.split()
        with self._lock:
            self._calls += 1
            self._check_availability()
            self._score_calls += 1
            if "probs" in self.options:
                probs = self.options["probs"]
                return [(tok, probs[i % len(probs)]) for i, tok in enumerate(tokens)]
            if "default_prob" in self.options:
                return [(tok, self.options["default_prob"]) for tok in tokens]
            p = self._oracle_prob(prompt, target, self._score_calls)
            return [(tok, p) for tok in tokens]

    def _oracle_prob(self, prompt: str, target: str, call_index: int) -> float:
        oracle = self._require_oracle()
        mid_fraction = self.options.get("mid_fraction", 0.0)
        forced_mid = math.floor(call_index * mid_fraction) > math.floor((call_index - 1) * mid_fraction)
        _, correct = oracle.resolve(prompt)
        _, chosen = split_cot_and_label(target)
        if forced_mid or correct is None:
            lo, hi = self.options.get("mid_range", (0.35, 0.65))
        elif chosen == correct:
            lo, hi = self.options.get("correct_range", (0.80, 0.98))
        else:
            lo, hi = self.options.get("wrong_range", (0.05, 0.30))
        return lo + (hi - lo) * self._rng.random()

    # -- discriminative logits (evaluator role) --------------------------------

    def judge(self, eval_prompt: str) -> tuple[float, float]:
        with self._lock:
            self._calls += 1
            self._check_availability()
            if "logits" in self.options:
                g0, g1 = self.options["logits"]
                return float(g0), float(g1)
            if "judge_prob" in self.options:
                p = self.options["judge_prob"]
                return 0.0, math.log(p / (1.0 - p))
            oracle = self._require_oracle()
            margin = self.options.get("margin", 4.0)
            prompt, output = _parse_eval_prompt(eval_prompt)
            _, correct = oracle.resolve(prompt)
            _, chosen = split_cot_and_label(output)
            if correct is None:
                return 0.0, 0.0
            if chosen == correct:
                return -margin / 2.0, margin / 2.0
            return margin / 2.0, -margin / 2.0


class RemoteBackend:
    """JSON-over-HTTP backend speaking the thin protocol in docs/wire.md."""

    def __init__(self, profile: BackendProfile, transport: httpx.BaseTransport | None = None):
        self.profile = profile
        headers = {}
        token_env = profile.options.get("auth_token_env")
        if token_env and os.environ.get(token_env):
            headers["Authorization"] = f"Bearer {os.environ[token_env]}"
        self._client = httpx.Client(
            base_url=profile.endpoint or "",
            headers=headers,
            timeout=profile.deadline_ms / 1000.0,
            transport=transport,
        )

    def _post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise ProtocolError(f"backend returned HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise ProtocolError("non-JSON backend response") from exc

    def complete(self, prompt: str) -> str:
        data = self._post("/complete", {"prompt": prompt})
        if "text" not in data:
            raise ProtocolError("complete response missing 'text'")
        return str(data["text"])

    def score(self, prompt: str, target: str) -> list[tuple[str, float]]:
        data = self._post("/score", {"prompt": prompt, "target": target})
        if "tokens" not in data:
            raise ScoringUnsupported("backend lacks scoring capability")
        return [(entry["token"], float(entry["p"])) for entry in data["tokens"]]

    def judge(self, prompt: str) -> tuple[float, float]:
        data = self._post("/judge", {"prompt": prompt})
        if "g0" in data and "g1" in data:
            return float(data["g0"]), float(data["g1"])
        if "p" in data:
            p = float(data["p"])
            if not 0.0 < p < 1.0:
                raise ProtocolError(f"judge probability {p} outside (0, 1)")
            return 0.0, math.log(p / (1.0 - p))
        raise ProtocolError("judge response carries neither logits nor a probability")


def build_backend(profile: BackendProfile, graph: FsmGraph | None = None):
    if profile.kind == "mock":
        return MockBackend(profile, graph=graph)
    return RemoteBackend(profile)


class LlmGateway:
    """Deadline-enforcing front door for one backend profile."""

    def __init__(self, profile: BackendProfile, backend=None, graph: FsmGraph | None = None,
                 prompt_store=None):
        self.profile = profile
        self.backend = backend if backend is not None else build_backend(profile, graph=graph)
        self.prompt_store = prompt_store

    def complete(self, prompt: str, deadline_override_ms: int | None = None) -> str:
        deadline = deadline_override_ms or self.profile.deadline_ms
        text = _run_with_deadline(lambda: self.backend.complete(prompt), deadline, "complete")
        if not isinstance(text, str):
            raise ProtocolError("backend returned non-text completion")
        return text

    def score_target(self, prompt: str, target_text: str) -> list[TokenScore]:
        """Per-token probabilities of target_text under the evaluator backend."""
        if self.profile.role != "evaluator":
            raise ScoringUnsupported(f"role {self.profile.role!r} cannot score targets")
        if not target_text or not target_text.split():
            raise ValueError("empty target")
        pairs = _run_with_deadline(
            lambda: self.backend.score(prompt, target_text), self.profile.deadline_ms, "score"
        )
        scores: list[TokenScore] = []
        for token, p in pairs:
            if p <= 0.0:
                logger.warning("token %r scored %g; flooring to %g", token, p, PROBABILITY_FLOOR)
                p = PROBABILITY_FLOOR
            if not p <= 1.0:
                raise ProtocolError(f"token probability {p} above 1")
            scores.append(TokenScore(token=token, probability=p))
        return scores

    def judge_logits(self, eval_prompt: str) -> tuple[float, float]:
        """Two label logits from the discriminative evaluator head."""
        if self.profile.role != "evaluator":
            raise ScoringUnsupported(f"role {self.profile.role!r} cannot produce label logits")
        g0, g1 = _run_with_deadline(
            lambda: self.backend.judge(eval_prompt), self.profile.deadline_ms, "judge"
        )
        if not (math.isfinite(g0) and math.isfinite(g1)):
            raise ProtocolError(f"non-finite judge logits ({g0}, {g1})")
        return float(g0), float(g1)

    def judge_incontext(self, prompt_version: str, sample) -> JudgeVerdict:
        """Black-box verdict for a generation record under a stored prompt version.

        `sample` needs prompt_text and raw_output attributes. Unparseable
        backend text maps to the `uncertain` label, never outside the closed set.
        """
        if self.profile.role != "judge":
            raise ScoringUnsupported(f"role {self.profile.role!r} cannot act as judge")
        if self.prompt_store is None:
            raise ProtocolError("judge gateway has no prompt store")
        from .templates import render_judge_prompt

        body = self.prompt_store.body(prompt_version)
        rendered = render_judge_prompt(body, sample.prompt_text, sample.raw_output)
        text = _run_with_deadline(
            lambda: self.backend.complete(rendered), self.profile.deadline_ms, "judge_incontext"
        )
        label, rationale = parse_verdict_text(text)
        return JudgeVerdict(label=label, rationale=rationale, prompt_version=prompt_version)


def parse_verdict_text(text: str) -> tuple[str, str]:
    lowered = (text or "").lower()
    if any(word in lowered for word in ("incorrect", "false", "wrong")):
        return "incorrect", text
    if any(word in lowered for word in ("correct", "true")):
        return "correct", text
    if any(word in lowered for word in ("unclear", "uncertain", "unsure")):
        return "uncertain", text
    return "uncertain", "unparseable"
