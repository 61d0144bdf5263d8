"""Four-step plot extraction: read the data, write replot code, run it, compare.

Steps one to three share a single conversation so the replot and repair
requests see the earlier replies. The comparison runs in a fresh
conversation that holds only the two images.
"""

from __future__ import annotations

import json
import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from .gateway import ChatMessage, ChatSession, Gateway, GatewayError, Image, ModelParams, sniff_media_type
from .model import (
    ExtractionOutcome,
    PlotData,
    SchemaError,
    Status,
    canonicalize,
    dumps,
    from_dict,
    to_csv,
    validate_plot_data,
)
from .render import StyleSpec, render_plot
from .sandbox import ExecutionResult, execute_script, repair_loop, resolve_interpreter

log = logging.getLogger(__name__)

NO_DATA_SENTINEL = "NO_DATA"
BACKENDS = ("llm_codegen", "native")
PROMPT_NAMES = ("extract", "format_reminder", "replot", "repair", "compare", "clarify")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_FENCE = re.compile(r"```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```", re.DOTALL)
_PUNCT = str.maketrans("", "", string.punctuation)
_STDERR_LIMIT = 20_000


class NoData:
    """The model reported that nothing can be extracted."""

    def __repr__(self) -> str:
        return "NoData"

    def __eq__(self, other) -> bool:
        return isinstance(other, NoData)

    def __hash__(self) -> int:
        return 0


class ParseError(ValueError):
    pass


class PipelineFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    params: ModelParams = field(default_factory=ModelParams)
    max_repair_iterations: int = 3
    replot_backend: str = "llm_codegen"
    sandbox_timeout: float = 60.0
    prompt_version: str = "v1"
    interpreter_cmd: str = "python3"
    keep_workdirs: bool = False

    def __post_init__(self):
        if self.max_repair_iterations < 1:
            raise ValueError("max_repair_iterations must be at least 1")
        if self.replot_backend not in BACKENDS:
            raise ValueError(f"replot_backend must be one of {BACKENDS}")
        if self.sandbox_timeout <= 0:
            raise ValueError("sandbox_timeout must be positive")


@dataclass(frozen=True)
class Verdict:
    match: bool
    raw_reply: str


@dataclass(frozen=True)
class PromptSet:
    version: str
    texts: dict[str, string.Template]

    @classmethod
    def load(cls, version: str) -> PromptSet:
        root = resources.files("plotextract").joinpath("prompts", version)
        if not root.is_dir():
            raise ValueError(f"unknown prompt version {version!r}")
        return cls(version, {n: string.Template(root.joinpath(f"{n}.txt").read_text(encoding="utf-8")) for n in PROMPT_NAMES})

    def render(self, name: str, **values: str) -> str:
        return self.texts[name].substitute(values).strip()


def _unfence(reply: str) -> str:
    m = _FENCE.search(reply)
    return m.group(1) if m else reply


def parse_model_reply(reply: str) -> PlotData | NoData:
    """Canonical PlotData from a reply, tolerating code fences and surrounding prose."""
    body = _unfence(reply).strip()
    lines = [ln.strip() for ln in body.splitlines()]
    if NO_DATA_SENTINEL in lines and "{" not in body:
        return NoData()
    start = body.find("{")
    if start < 0:
        raise ParseError("no JSON object found in the reply")
    try:
        obj, _ = json.JSONDecoder(parse_constant=_reject_constant).raw_decode(body, start)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        data = from_dict(obj)
    except SchemaError as exc:
        raise ParseError(str(exc)) from exc
    violations = validate_plot_data(data)
    if violations:
        raise ParseError("; ".join(str(v) for v in violations))
    return canonicalize(data)


def _reject_constant(token: str):
    raise json.JSONDecodeError(f"non-finite number {token}", token, 0)


def extract_code(reply: str) -> str:
    """Script text from a reply; the first fenced block wins, else the whole reply."""
    return _unfence(reply).strip() + "\n"


def parse_verdict(reply: str) -> bool | None:
    tokens = reply.lower().strip().translate(_PUNCT).split()
    if tokens and tokens[0] in ("yes", "no"):
        return tokens[0] == "yes"
    return None


@dataclass
class PipelineRun:
    outcome: ExtractionOutcome
    reproduced: bytes | None = None
    extracted: PlotData | None = None


class _Job:
    """State for one image; every model call goes through ``ask``."""

    def __init__(self, session: ChatSession, config: PipelineConfig, prompts: PromptSet, execute):
        self.session = session
        self.config = config
        self.prompts = prompts
        self.execute = execute
        self.conversation: list[ChatMessage] = []

    def ask(self, text: str, *images: Image, step: str) -> str:
        self.conversation.append(ChatMessage.user(text, *images))
        reply = self.session.send_chat(self.conversation, self.config.params, step=step)
        self.conversation.append(ChatMessage.assistant(reply))
        return reply

    def extract(self, image: Image) -> PlotData | NoData:
        reply = self.ask(self.prompts.render("extract"), image, step="extract")
        try:
            return parse_model_reply(reply)
        except ParseError as exc:
            log.info("%s: unparseable extraction (%s); sending format reminder", self.session.transcript_id, exc)
            reply = self.ask(self.prompts.render("format_reminder", error=str(exc)), step="format_repair")
            try:
                return parse_model_reply(reply)
            except ParseError as exc2:
                raise PipelineFailure(f"extraction reply unparseable after format repair: {exc2}") from exc2

    def reproduce(self, data: PlotData) -> tuple[bytes | None, int, str]:
        if self.config.replot_backend == "native":
            return render_plot(data, StyleSpec.default(len(data.series))), 0, ""
        source = extract_code(self.ask(self.prompts.render("replot", data=dumps(data)), step="replot"))

        def request_fix(src: str, result: ExecutionResult) -> str:
            error = result.stderr[-_STDERR_LIMIT:]
            return extract_code(self.ask(self.prompts.render("repair", error=error), step="repair"))

        run = repair_loop(source, self.config.max_repair_iterations, request_fix, self.execute)
        if not run.result.ok:
            return None, run.executions, f"replot script failed after {run.executions} executions ({run.result.status.value}): {run.result.stderr.strip()[-2000:]}"
        return run.result.produced_image, run.executions, ""

    def compare(self, original: Image, reproduced: bytes) -> Verdict:
        self.conversation = []
        reply = self.ask(self.prompts.render("compare"), original, Image("image/png", reproduced), step="compare")
        verdict = parse_verdict(reply)
        if verdict is None:
            reply = self.ask(self.prompts.render("clarify"), step="clarify")
            verdict = parse_verdict(reply)
            if verdict is None:
                raise PipelineFailure(f"comparison reply is neither yes nor no: {reply[:200]!r}")
        return Verdict(verdict, reply)


def run_pipeline(
    image: bytes,
    session: ChatSession,
    config: PipelineConfig | None = None,
    execute: Callable[[str], ExecutionResult] | None = None,
) -> PipelineRun:
    """Run all four steps on one image; every error becomes a Failure outcome."""
    cfg = config or PipelineConfig()
    if execute is None:
        def execute(src: str) -> ExecutionResult:
            return execute_script(src, cfg.sandbox_timeout, cfg.interpreter_cmd, cfg.keep_workdirs)

    tid = session.transcript_id
    job = _Job(session, cfg, PromptSet.load(cfg.prompt_version), execute)
    data: PlotData | None = None
    executions = 0
    try:
        original = Image(sniff_media_type(image), image)
        extracted = job.extract(original)
        if isinstance(extracted, NoData):
            return PipelineRun(ExtractionOutcome(Status.NO_DATA, transcript_id=tid))
        data = extracted
        reproduced, executions, error = job.reproduce(data)
        if reproduced is None:
            return PipelineRun(ExtractionOutcome(Status.FAILURE, data, (error,), tid, executions), extracted=data)
        verdict = job.compare(original, reproduced)
    except (PipelineFailure, GatewayError, ValueError) as exc:
        diag = f"{type(exc).__name__}: {exc}"
        return PipelineRun(ExtractionOutcome(Status.FAILURE, data, (diag,), tid, executions), extracted=data)
    status = Status.ACCEPTED if verdict.match else Status.VISUAL_MISMATCH
    diagnostics = () if verdict.match else (f"comparison verdict: {verdict.raw_reply.strip()[:200]}",)
    return PipelineRun(ExtractionOutcome(status, data, diagnostics, tid, executions), reproduced, data)


def find_images(root: str | Path) -> list[tuple[str, Path]]:
    """(stem, path) pairs for a directory of images or a benchmark with ``manifest.json``."""
    root = Path(root)
    if root.is_file():
        return [(root.stem, root)]
    manifest = root / "manifest.json"
    if manifest.is_file():
        plots = json.loads(manifest.read_text(encoding="utf-8"))["plots"]
        return [(p["id"], root / p["image"]) for p in plots]
    found = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    stems = [p.stem for p in found]
    dupes = sorted({s for s in stems if stems.count(s) > 1})
    if dupes:
        raise ValueError(f"duplicate image stems: {', '.join(dupes)}")
    return [(p.stem, p) for p in found]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def persist(run: PipelineRun, stem: str, out_dir: Path) -> None:
    o = run.outcome
    record = {"id": stem, **o.to_dict()}
    _write(out_dir / "outcome" / f"{stem}.json", json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    if o.status is Status.ACCEPTED:
        _write(out_dir / "extracted" / f"{stem}.json", dumps(o.data))
        _write(out_dir / "extracted" / f"{stem}.csv", to_csv(o.data))
    elif o.status is Status.VISUAL_MISMATCH:
        _write(out_dir / "flagged" / f"{stem}.json", dumps(o.data))
        _write(out_dir / "flagged" / f"{stem}.csv", to_csv(o.data))
    if run.reproduced is not None:
        path = out_dir / "reproduced" / f"{stem}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(run.reproduced)


def run_batch(
    images: list[tuple[str, Path]],
    out_dir: str | Path,
    gateway: Gateway,
    config: PipelineConfig | None = None,
    workers: int = 4,
) -> list[tuple[str, ExtractionOutcome]]:
    """Run every image through the pipeline with a bounded worker pool; results keep input order."""
    cfg = config or PipelineConfig()
    if cfg.replot_backend == "llm_codegen":
        resolve_interpreter(cfg.interpreter_cmd)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(item: tuple[str, Path]) -> tuple[str, ExtractionOutcome]:
        stem, path = item
        session = gateway.session(stem, out / "transcripts" / f"{stem}.jsonl")
        run = run_pipeline(path.read_bytes(), session, cfg)
        persist(run, stem, out)
        log.info("%s: %s", stem, run.outcome.status.value)
        return stem, run.outcome

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, images))
