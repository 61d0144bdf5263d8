"""Run generated plotting scripts in throwaway directories.

This is process-level isolation only (fresh temp dir plus a timeout). It is
not a security boundary: the script runs with the caller's privileges.
"""

from __future__ import annotations

import enum
import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

OUTPUT_NAME = "output.png"
SCRIPT_NAME = "script.py"
WORKDIR_TOKEN = "<workdir>"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class InterpreterMissing(RuntimeError):
    pass


class ExecStatus(str, enum.Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecStatus
    stderr: str = ""
    stdout: str = ""
    produced_image: bytes | None = None
    elapsed: float = 0.0
    workdir: str | None = None  # set only when the directory was kept

    def __post_init__(self):
        if self.status is ExecStatus.OK and self.produced_image is None:
            raise ValueError("ok result needs an image")
        if self.status is ExecStatus.ERROR and not self.stderr:
            raise ValueError("error result needs stderr")

    @property
    def ok(self) -> bool:
        return self.status is ExecStatus.OK


def resolve_interpreter(interpreter_cmd: str) -> list[str]:
    """Split the command and check that its program exists; call this at startup."""
    argv = shlex.split(interpreter_cmd)
    if not argv or shutil.which(argv[0]) is None:
        raise InterpreterMissing(f"interpreter {interpreter_cmd!r} not found on PATH")
    return argv


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass


def execute_script(
    source: str,
    timeout: float = 60.0,
    interpreter_cmd: str = "python3",
    keep_workdir: bool = False,
) -> ExecutionResult:
    """Write ``source`` to a fresh directory, run it there and collect ``output.png``.

    The directory path is replaced by ``<workdir>`` in stdout and stderr so
    error text is identical between runs.
    """
    argv = resolve_interpreter(interpreter_cmd)
    workdir = Path(tempfile.mkdtemp(prefix="plotextract-"))
    (workdir / SCRIPT_NAME).write_text(source, encoding="utf-8")
    env = {**os.environ, "MPLBACKEND": "Agg", "PYTHONDONTWRITEBYTECODE": "1"}
    start = time.monotonic()
    proc = subprocess.Popen(
        argv + [SCRIPT_NAME],
        cwd=workdir,
        env=env,
        stdin=subprocess.DEVNULL,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        start_new_session=True,
    )
    try:
        out, err = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        out, err = proc.communicate()
        timed_out = True
    elapsed = time.monotonic() - start

    def clean(raw: bytes) -> str:
        text = raw.decode("utf-8", errors="replace")
        return text.replace(str(workdir.resolve()), WORKDIR_TOKEN).replace(str(workdir), WORKDIR_TOKEN)

    stdout, stderr = clean(out), clean(err)
    image_path = workdir / OUTPUT_NAME
    image = image_path.read_bytes() if image_path.is_file() else None
    kept = str(workdir) if keep_workdir else None
    if not keep_workdir:
        shutil.rmtree(workdir, ignore_errors=True)

    if timed_out:
        return ExecutionResult(ExecStatus.TIMEOUT, stderr or f"timed out after {timeout:g} s", stdout, None, elapsed, kept)
    if proc.returncode != 0:
        return ExecutionResult(ExecStatus.ERROR, stderr or f"process exited with status {proc.returncode}", stdout, None, elapsed, kept)
    if image is None:
        msg = f"the script finished but did not save {OUTPUT_NAME} in the working directory"
        return ExecutionResult(ExecStatus.ERROR, msg, stdout, None, elapsed, kept)
    if not image.startswith(PNG_MAGIC):
        return ExecutionResult(ExecStatus.ERROR, f"{OUTPUT_NAME} is not a PNG image", stdout, None, elapsed, kept)
    return ExecutionResult(ExecStatus.OK, stderr, stdout, image, elapsed, kept)


@dataclass(frozen=True)
class RepairRun:
    source: str
    result: ExecutionResult
    executions: int
    repair_requests: int


def repair_loop(
    initial_source: str,
    max_iterations: int,
    request_fix: Callable[[str, ExecutionResult], str],
    execute: Callable[[str], ExecutionResult],
) -> RepairRun:
    """Execute, and on failure ask for a fixed script, up to ``max_iterations`` executions.

    ``request_fix(source, result)`` returns the revised script; the caller
    decides how the error is phrased to the model.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    source = initial_source
    result = execute(source)
    executions, repairs = 1, 0
    while not result.ok and executions < max_iterations:
        source = request_fix(source, result)
        repairs += 1
        result = execute(source)
        executions += 1
    return RepairRun(source, result, executions, repairs)
