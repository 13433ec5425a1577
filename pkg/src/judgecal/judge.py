"""Pairwise judge harness: prompt assembly, completion parsing, endpoint calls.

A judge call sees one question and two answers and returns both scores at
once. The prompt ends with a directive asking for a final machine-readable
line ``Scores: A=<int>, B=<int>``; :func:`parse_scores` falls back to the last
two in-range numbers when a judge ignores it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import httpx

from .core import SCORE_MAX, SCORE_MIN, ModelSet, ScoreRecord, ScoreTable
from .errors import EndpointError, ParseError, ParseFailure, RangeError

logger = logging.getLogger(__name__)

API_KEY_ENV = "JUDGE_API_KEY"

INSTRUCTIONS = (
    "Please act as an impartial judge and evaluate the quality of the responses provided by two "
    "AI assistants to the user question displayed below. You should choose the assistant that "
    "follows the user’s instructions and answers the user’s question better.\n"
    "\n"
    "Your evaluation should consider factors such as the clarity, intelligence, likability, "
    "trustworthiness, and level of detail of their responses.\n"
    "\n"
    "Begin your evaluation by comparing the two responses and provide a short explanation. Avoid "
    "any position biases and ensure that the order in which the responses were presented does "
    "not influence your decision.\n"
    "\n"
    "Do not allow the length of the responses to influence your evaluation. Do not favor certain "
    "names of the assistants. Be as objective as possible.\n"
    "\n"
    "Each assistant receives an overall score on a scale of 1 to 10, where a higher score "
    "indicates a better response."
)

FORMAT_DIRECTIVE = (
    "After your explanation, end your reply with one final line in exactly this format:\n"
    "Scores: A=<score>, B=<score>\n"
    "where each <score> is an integer from 1 to 10."
)

RETRY_DIRECTIVE = (
    "IMPORTANT: your previous reply could not be read. The last line of your reply MUST be "
    "\"Scores: A=<score>, B=<score>\" with two integers from 1 to 10 and nothing else on that line."
)

_MARKER = re.compile(
    r"\\*\[(?:User Question|The (?:Start|End) of Assistant [AB]’s Answer)\]"
)


def escape_block(text: str) -> str:
    """Prefix one backslash to anything that looks like a template marker.

    Applied to question and answers so that user text cannot forge a block
    boundary. Markers already preceded by backslashes gain one more, which
    keeps the mapping injective.
    """
    return _MARKER.sub(lambda m: "\\" + m.group(0), text)


def unescape_block(text: str) -> str:
    return _MARKER.sub(lambda m: m.group(0)[1:] if m.group(0).startswith("\\") else m.group(0), text)


@dataclass(frozen=True)
class EvalTask:
    prompt_id: str
    question: str
    response_a: str
    response_b: str
    model_a: str
    model_b: str

    def __post_init__(self) -> None:
        for name in ("prompt_id", "question", "response_a", "response_b", "model_a", "model_b"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} must be a non-empty string")
        if self.model_a == self.model_b:
            raise ValueError(f"model_a and model_b are both {self.model_a!r}")

    def swapped(self) -> EvalTask:
        return EvalTask(
            self.prompt_id, self.question, self.response_b, self.response_a, self.model_b, self.model_a
        )


@dataclass(frozen=True)
class JudgeConfig:
    endpoint_url: str = "http://localhost:11434/v1/chat/completions"
    judge_model_name: str = "llama3.1:8b-instruct-q4_K_M"
    temperature: float = 1.0
    max_parallel: int = 4
    swap_orders: bool = False
    retries: int = 2
    timeout: float = 120.0
    backoff: float = 1.0  # seconds before the first retry, doubled each time

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


@dataclass(frozen=True)
class JudgeTranscript:
    prompt_id: str
    model_a: str
    model_b: str
    order_swapped: bool
    attempt: int
    request_text: str
    completion_text: str | None
    parsed: tuple[float, float] | None
    error: str | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["parsed"] = list(self.parsed) if self.parsed is not None else None
        return out


@dataclass(frozen=True)
class Skip:
    prompt_id: str
    model_a: str
    model_b: str
    order_swapped: bool
    reason: str

    def to_json(self) -> dict:
        return asdict(self)


def build_prompt(task: EvalTask, emphasize_format: bool = False) -> str:
    """The judge prompt for ``task``, answer A shown first. Byte-stable."""
    parts = [
        "[User Question]",
        escape_block(task.question),
        "",
        "[The Start of Assistant A’s Answer]",
        escape_block(task.response_a),
        "[The End of Assistant A’s Answer]",
        "",
        "[The Start of Assistant B’s Answer]",
        escape_block(task.response_b),
        "[The End of Assistant B’s Answer]",
        "",
        INSTRUCTIONS,
        "",
        FORMAT_DIRECTIVE,
    ]
    if emphasize_format:
        parts += ["", RETRY_DIRECTIVE]
    return "\n".join(parts)


_NUM = r"[-+]?\d+(?:\.\d+)?"
_FORMAT_LINE = re.compile(
    rf"^[\s*_`>#-]*scores?[\s*_`]*:[\s*_`]*A\s*=\s*({_NUM})\s*[,;]?\s*B\s*=\s*({_NUM})",
    re.IGNORECASE,
)
_DENOMINATOR = re.compile(r"\s*(?:/\s*10|out\s+of\s+10)\b", re.IGNORECASE)
_STANDALONE = re.compile(r"(?<![\w.\-])\d+(?:\.\d+)?(?![\w]|\.\d)")


def parse_scores(completion: str) -> tuple[float, float]:
    """Extract ``(score_a, score_b)`` from a judge completion.

    Uses the last line in the mandated ``Scores: A=.., B=..`` format when
    present, otherwise the last two standalone numbers within 1-10. Scores are
    rejected, never clamped.

    Raises:
        ParseFailure: no scores found.
        RangeError: the format line carries a score outside 1-10.
    """
    if not completion or not completion.strip():
        raise ParseFailure("empty completion")
    found = None
    for line in completion.splitlines():
        m = _FORMAT_LINE.match(line)
        if m:
            found = m
    if found is not None:
        a, b = float(found.group(1)), float(found.group(2))
        for name, value in (("A", a), ("B", b)):
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise RangeError(f"score {name}={value:g} outside [1, 10]")
        return a, b
    text = _DENOMINATOR.sub("", completion)
    numbers = [float(tok) for tok in _STANDALONE.findall(text)]
    numbers = [x for x in numbers if SCORE_MIN <= x <= SCORE_MAX]
    if len(numbers) < 2:
        raise ParseFailure("no scores found in completion")
    return numbers[-2], numbers[-1]


ChatClient = Callable[[str], str]


class HttpChatClient:
    """Chat-completion endpoint client (OpenAI-style JSON over HTTP POST)."""

    def __init__(self, cfg: JudgeConfig, transport: httpx.BaseTransport | None = None) -> None:
        self.cfg = cfg
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)

    def payload(self, prompt: str) -> dict:
        return {
            "model": self.cfg.judge_model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        }

    def __call__(self, prompt: str) -> str:
        try:
            resp = self._client.post(self.cfg.endpoint_url, json=self.payload(prompt))
        except httpx.HTTPError as exc:
            raise EndpointError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code >= 400:
            raise EndpointError(f"HTTP {resp.status_code} from {self.cfg.endpoint_url}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"unexpected response body: {exc!r}") from exc
        if not isinstance(content, str):
            raise EndpointError("response content is not a string")
        return content

    def close(self) -> None:
        self._client.close()


class StubChatClient:
    """Offline judge whose verdict is a pure function of the prompt."""

    def __call__(self, prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        a, b = 1 + digest[0] % 10, 1 + digest[1] % 10
        return f"Both answers address the question; weighing clarity and detail.\nScores: A={a}, B={b}"


def evaluate_pair(
    task: EvalTask,
    cfg: JudgeConfig,
    client: ChatClient | None = None,
    transcripts: list | None = None,
    skipped: list | None = None,
) -> list[ScoreRecord]:
    """Judge one task, once or in both presentation orders.

    Scores from the swapped order are mapped back onto ``task.model_a`` /
    ``task.model_b``. Each order is retried up to ``cfg.retries`` times on
    transport or parse errors. An order that never parses becomes a
    :class:`Skip` in ``skipped`` (or raises :class:`ParseFailure` when no
    list is given).

    Raises:
        EndpointError: every attempt of an order failed in transport.
    """
    if client is None:
        http = HttpChatClient(cfg)
        try:
            return evaluate_pair(task, cfg, http, transcripts, skipped)
        finally:
            http.close()
    records = []
    for swap in ([False, True] if cfg.swap_orders else [False]):
        shown = task.swapped() if swap else task
        got_reply = False
        last_error = ""
        parsed = None
        for attempt in range(cfg.retries + 1):
            if attempt and cfg.backoff > 0:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            prompt = build_prompt(shown, emphasize_format=attempt > 0)
            completion = None
            try:
                completion = client(prompt)
                got_reply = True
                parsed = parse_scores(completion)
                last_error = ""
            except (EndpointError, ParseFailure, ParseError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                parsed = None
            if transcripts is not None:
                transcripts.append(
                    JudgeTranscript(
                        task.prompt_id, task.model_a, task.model_b, swap, attempt,
                        prompt, completion, parsed, last_error or None,
                    )
                )
            if parsed is not None:
                break
        if parsed is None:
            if not got_reply:
                raise EndpointError(
                    f"{task.prompt_id} ({task.model_a} vs {task.model_b}): "
                    f"{cfg.retries + 1} attempts failed; last: {last_error}"
                )
            if skipped is None:
                raise ParseFailure(f"{task.prompt_id}: {last_error}")
            skipped.append(Skip(task.prompt_id, task.model_a, task.model_b, swap, last_error))
            continue
        score_shown_a, score_shown_b = parsed
        if swap:
            records.append(
                ScoreRecord(task.prompt_id, task.model_a, task.model_b, score_shown_b, score_shown_a, True)
            )
        else:
            records.append(ScoreRecord(task.prompt_id, task.model_a, task.model_b, score_shown_a, score_shown_b))
    return records


@dataclass(frozen=True)
class MatrixResult:
    records: tuple[ScoreRecord, ...]
    models: ModelSet | None
    skipped: tuple[Skip, ...] = ()
    transcripts: tuple[JudgeTranscript, ...] = ()
    failed_tasks: tuple[str, ...] = field(default=())

    @property
    def table(self) -> ScoreTable:
        if self.models is None:
            raise ValueError("no tasks were given, so there is no model set")
        return ScoreTable(self.records, self.models)


def run_matrix(
    tasks: Sequence[EvalTask],
    cfg: JudgeConfig,
    client: ChatClient | None = None,
    models: ModelSet | None = None,
) -> MatrixResult:
    """Judge every task with at most ``cfg.max_parallel`` calls in flight.

    Output order follows task order whatever the completion order, so
    repeated runs against a deterministic client are identical. Tasks that
    fail permanently are reported in ``skipped`` and ``failed_tasks``; the
    remaining records are still returned.
    """
    tasks = list(tasks)
    if models is None and tasks:
        models = ModelSet({m for t in tasks for m in (t.model_a, t.model_b)})
    if not tasks:
        return MatrixResult((), models)
    owns_client = client is None
    client = client or HttpChatClient(cfg)

    def one(task: EvalTask):
        transcripts: list = []
        skipped: list = []
        try:
            records = evaluate_pair(task, cfg, client, transcripts, skipped)
            failed = False
        except EndpointError as exc:
            records = []
            skipped.append(Skip(task.prompt_id, task.model_a, task.model_b, False, f"EndpointError: {exc}"))
            failed = True
        return records, transcripts, skipped, failed

    try:
        with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
            results = list(pool.map(one, tasks))
    finally:
        if owns_client:
            client.close()
    records, transcripts, skipped, failed = [], [], [], []
    for task, (recs, trans, skips, task_failed) in zip(tasks, results):
        records.extend(recs)
        transcripts.extend(trans)
        skipped.extend(skips)
        if task_failed:
            failed.append(task.prompt_id)
    ScoreTable(records, models)  # validates ids and duplicate contests
    return MatrixResult(tuple(records), models, tuple(skipped), tuple(transcripts), tuple(failed))


def load_tasks(path) -> list[EvalTask]:
    """Tasks JSONL: ``prompt_id``, ``question``, ``response_a``, ``response_b``, ``model_a``, ``model_b``."""
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tasks.append(EvalTask(**{k: obj[k] for k in EvalTask.__dataclass_fields__}))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad task: {exc}", str(path), lineno) from None
    return tasks


def save_transcripts(transcripts: Iterable[JudgeTranscript], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_json(), ensure_ascii=False) + "\n")
