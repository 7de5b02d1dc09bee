"""Closed-loop LLM planning workflow.

An abstract chat client proposes deployments from structured prompts, a
verifier scores them, and a history module feeds the best result back into
the next prompt. Ships with a scripted mock client for tests and an HTTP
client for OpenAI-compatible endpoints.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .floorplan import Deployment, FloorPlan, Position, indoor_cells, project_to_feasible
from .metrics import EvalResult, TaskSpec, evaluate
from .propagation import RadioConfig, compute_radio_map

__all__ = [
    "ChatClient",
    "MockChatClient",
    "HttpChatClient",
    "TransportError",
    "AgentLoopError",
    "AgentConfig",
    "DeploymentHistory",
    "HistoryEntry",
    "build_init_prompt",
    "build_refine_prompt",
    "parse_deployment",
    "coverage_map_summary",
    "run_agent_loop",
]


class TransportError(RuntimeError):
    """A chat completion could not be obtained from the backend."""


class AgentLoopError(RuntimeError):
    """Planning loop aborted; carries the partial history."""

    def __init__(self, message: str, history: "DeploymentHistory"):
        super().__init__(message)
        self.history = history


class ChatClient:
    """Chat-completion contract: complete(messages) -> response text."""

    model = "abstract"

    def complete(self, messages) -> str:
        raise NotImplementedError


class MockChatClient(ChatClient):
    """Plays back a scripted response sequence; repeats the last entry when
    exhausted. Scripts may also be loaded from a JSON file with a
    ``responses`` list."""

    model = "mock"

    def __init__(self, responses, fail_times: int = 0):
        if isinstance(responses, (str, os.PathLike)):
            with open(responses) as fh:
                responses = json.load(fh)["responses"]
        if not responses:
            raise ValueError("mock script needs at least one response")
        self.responses = list(responses)
        self.fail_times = fail_times
        self.calls = 0

    def complete(self, messages) -> str:
        if self.fail_times > 0:
            self.fail_times -= 1
            raise TransportError("scripted transport failure")
        idx = min(self.calls, len(self.responses) - 1)
        self.calls += 1
        return self.responses[idx]


class HttpChatClient(ChatClient):
    """POSTs to an OpenAI-compatible chat completions endpoint.

    Endpoint, model, and key come from APPLAN_LLM_URL, APPLAN_LLM_MODEL, and
    APPLAN_LLM_KEY unless given explicitly. Keys never reach the logs.
    """

    def __init__(self, url: str | None = None, model: str | None = None,
                 api_key: str | None = None, timeout: float = 60.0):
        self.url = url or os.environ.get("APPLAN_LLM_URL", "")
        self.model = model or os.environ.get("APPLAN_LLM_MODEL", "gpt-4o-mini")
        self.api_key = api_key or os.environ.get("APPLAN_LLM_KEY", "")
        self.timeout = timeout
        if not self.url:
            raise ValueError("no endpoint configured; set APPLAN_LLM_URL")

    def complete(self, messages) -> str:
        import requests

        body = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:  # noqa: BLE001 - every backend failure maps to one type
            raise TransportError(str(exc)) from exc


@dataclass
class AgentConfig:
    max_iters: int = 10
    radio: RadioConfig = field(default_factory=RadioConfig)
    map_summary_max: int = 40       # ASCII coverage summary is capped at this size
    coords_in_prompt_max: int = 200
    transcript_path: Optional[str] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class HistoryEntry:
    iteration: int
    deployment: Deployment
    result: EvalResult
    feedback: str
    repaired: bool


@dataclass
class DeploymentHistory:
    """Append-only log of evaluated proposals with best-entry tracking."""

    entries: list = field(default_factory=list)

    def append(self, entry: HistoryEntry) -> None:
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    @property
    def best_index(self) -> int:
        if not self.entries:
            raise ValueError("history is empty")
        feasible = [
            i for i, e in enumerate(self.entries)
            if e.result.e_d == 0.0 and e.result.e_b == 0.0
        ]
        pool = feasible if feasible else range(len(self.entries))
        return max(pool, key=lambda i: self.entries[i].result.coverage)

    @property
    def best(self) -> HistoryEntry:
        return self.entries[self.best_index]


# -- prompts -----------------------------------------------------------------

_PRINCIPLES = """You must keep the following wireless propagation principles:

1) Distance-dependent attenuation:
   Signal strength decays with distance. Avoid leaving large uncovered areas far from any AP.
2) Wall and obstacle penetration loss:
   Walls/obstacles introduce additional attenuation. Placing an AP behind multiple walls rarely improves coverage in the target region.
3) Line-of-sight preference:
   Prioritize AP locations that provide clear LoS paths to large open regions or key corridors.
4) NLoS compensation strategy:
   If a region is blocked, cover it by placing an AP inside the region or near entrances/openings, rather than relying on deep penetration.
5) Coverage overlap control:
   Some overlap is needed for smooth coverage, but excessive clustering wastes APs. Spread APs to maximize marginal coverage gain.
6) Spatial diversity:
   Prefer placing APs in geometrically diverse positions (different rooms/corridors) to reduce redundancy and shadowed zones.
7) Boundary awareness:
   Avoid placing APs too close to walls/corners unless needed to cover edge regions; central elevated positions often produce broader coverage.
8) Iterative improvement rule:
   Use the verifier feedback to identify the largest uncovered region first, then relocate the most redundant AP toward that region."""

_OUTPUT_REQUIREMENT = (
    "Output requirement:\n"
    "- Always output exactly N AP locations in the required structured format in "
    "'[[X1, Y1, Z1], [X2, Y2, Z2], ...]' format without any other text."
)


def _grid_text(fp: FloorPlan) -> str:
    return "\n".join(
        "[" + ", ".join(str(int(v)) for v in row) + "]" for row in fp.grid
    )


def build_init_prompt(fp: FloorPlan, task: TaskSpec, cfg: AgentConfig) -> str:
    cells = indoor_cells(fp)
    coords = [f"[{c[0]:.2f}, {c[1]:.2f}]" for c in cells[: cfg.coords_in_prompt_max]]
    ellipsis = ", ..." if len(cells) > cfg.coords_in_prompt_max else ""
    return f"""Role & Mission: You are a wireless network planning assistant. Given the indoor layout and a fixed number of APs, propose AP locations to maximize coverage probability under a received power threshold.

Building Analysis:
Indoor area coordinates: [{", ".join(coords)}{ellipsis}]
Total indoor area: {len(cells)} grid cells

Floor Information:
{_grid_text(fp)}
where the floor information is a 2d array with 0 to 3:
- 0 = free space (preferred for AP placement)
- 1 = wall (avoid placing AP here)
- 2 = window (avoid placing AP here)
- 3 = door (avoid placing AP here)

Before generating coordinates, you must think step-by-step.

1) Deployment feasibility constraints:
- Keep the number of APs fixed: {task.n_aps}.
- Each AP must be placed in indoor free-space cells only (value 0).
- Minimum separation between the APs: {task.d_min_m}.
- AP coordinates must remain within the building boundary.

2) Coverage definition (pathloss-based):
- Pathloss should be lower than {cfg.radio.pathloss_threshold_db}.
- Interference should be lower than {task.xi_db}.
- Throughput should be larger than {task.t_min_bps / 1e6} Mbps.

{_PRINCIPLES}

{_OUTPUT_REQUIREMENT}"""


def coverage_map_summary(fp: FloorPlan, covered_grid: np.ndarray, max_size: int = 40) -> str:
    """ASCII downsample of the coverage map: 4 = not covered, 5 = covered,
    walls and out-of-plan cells keep their 1/2/3 codes."""
    h, w = fp.grid.shape
    step = max(1, int(np.ceil(max(h, w) / max_size)))
    lines = []
    for r0 in range(0, h, step):
        row = []
        for c0 in range(0, w, step):
            block = fp.grid[r0 : r0 + step, c0 : c0 + step]
            cov = covered_grid[r0 : r0 + step, c0 : c0 + step]
            free = block == 0
            if free.any():
                row.append("5" if np.nanmean(np.where(free, cov, np.nan)) >= 0.5 else "4")
            else:
                row.append(str(int(np.bincount(block.ravel()).argmax())))
        lines.append("".join(row))
    return "\n".join(lines)


def _constraint_summary(result: EvalResult) -> str:
    problems = []
    if result.e_d > 0:
        problems.append(f"minimum separation violated (e_d={result.e_d:.4f})")
    if result.e_b > 0:
        problems.append(f"boundary violated (e_b={result.e_b:.4f})")
    if result.e_i > 0:
        problems.append(f"interference above threshold (e_I={result.e_i:.4f})")
    if result.e_t > 0:
        problems.append(f"throughput below minimum (e_T={result.e_t:.4f})")
    return "; ".join(problems) if problems else "all constraints satisfied"


def build_refine_prompt(history: DeploymentHistory, map_summary: str) -> str:
    if len(history) == 0:
        raise ValueError("history is empty")
    best = history.best
    deployment_json = json.dumps(
        [[round(float(v), 3) for v in p] for p in best.deployment.as_array()]
    )
    return f"""Role & Mission: You receive the current best deployment and its evaluation results from the physical verifier.
If such feedback is available, you MUST treat the current best deployment as the baseline and perform a refinement rather than re-planning from scratch.

Current best deployment: {deployment_json}

Verifier feedback for the baseline:
- Coverage score: {best.result.coverage:.2f}
- Constraint status: {_constraint_summary(best.result)}
- Visual summary from coverage maps:
{map_summary}

Refinement policy:
- Identify the largest uncovered region (4: not covered, 5: covered) indicated by the feedback.
- Prefer relocating APs that contribute the least marginal gain or lie in redundant clusters.
- Move APs toward the uncovered region, while preserving already well-covered areas.
- Avoid moving many APs simultaneously. Update only a small subset of APs in one iteration.
- If interference violations are reported, reduce excessive overlap by increasing spatial separation among nearby APs.
- If throughput violations are reported, prioritize improving service to those regions by placing an AP closer with fewer obstructions.

{_OUTPUT_REQUIREMENT}"""


# -- parsing -----------------------------------------------------------------

_NUMBER = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


def parse_deployment(text: str, n_aps: int) -> Deployment:
    """Extract the first bracketed list of coordinate triples from model
    output, tolerating surrounding prose."""
    start = text.find("[[")
    if start < 0:
        raise ValueError("no deployment block found in response")
    depth = 0
    end = None
    for i in range(start, len(text)):
        if text[i] == "[":
            depth += 1
        elif text[i] == "]":
            depth -= 1
            if depth == 0:
                end = i + 1
                break
    if end is None:
        raise ValueError("unterminated deployment block in response")
    block = text[start:end]
    rows = re.findall(r"\[([^\[\]]*)\]", block)
    triples = []
    for row in rows:
        nums = _NUMBER.findall(row)
        if len(nums) != 3:
            raise ValueError(f"expected 3 coordinates per AP, got {len(nums)}")
        triples.append([float(v) for v in nums])
    if len(triples) != n_aps:
        raise ValueError(f"expected {n_aps} AP positions, got {len(triples)}")
    arr = np.asarray(triples)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates in response")
    return Deployment(arr)


# -- loop ---------------------------------------------------------------------

def _repair(fp: FloorPlan, deployment: Deployment) -> tuple[Deployment, bool]:
    """Clamp z into bounds and snap infeasible APs to the nearest free cell."""
    arr = deployment.as_array().copy()
    changed = False
    for i, row in enumerate(arr):
        z = float(np.clip(row[2], fp.z_bounds[0], fp.z_bounds[1]))
        p = Position(row[0], row[1], z)
        proj = project_to_feasible(fp, p)
        fixed = np.asarray(proj)
        if not np.array_equal(fixed, row):
            arr[i] = fixed
            changed = True
    return Deployment(arr), changed


def run_agent_loop(client: ChatClient, fp: FloorPlan, task: TaskSpec,
                   cfg: AgentConfig):
    """Propose, verify, and refine until the coverage target or the iteration
    budget is reached. Returns (best deployment, history).

    Transport failures are retried once; three consecutive parse failures
    abort the run. Infeasible proposals are repaired by projection before any
    verifier call, so history only ever contains evaluable deployments.
    """
    history = DeploymentHistory()
    transcript = []
    parse_failures = 0
    map_summary = ""

    for iteration in range(1, cfg.max_iters + 1):
        if len(history) == 0:
            prompt = build_init_prompt(fp, task, cfg)
        else:
            prompt = build_refine_prompt(history, map_summary)
        messages = [("user", prompt)]
        try:
            response = client.complete(messages)
        except TransportError:
            try:
                response = client.complete(messages)
            except TransportError as exc:
                _write_transcript(transcript, cfg)
                raise AgentLoopError(f"transport failed twice: {exc}", history) from exc

        record = {"iteration": iteration, "model": client.model,
                  "prompt": prompt, "response": response}
        try:
            proposal = parse_deployment(response, task.n_aps)
            parse_failures = 0
        except ValueError as exc:
            parse_failures += 1
            record["parse_error"] = str(exc)
            transcript.append(record)
            if parse_failures >= 3:
                _write_transcript(transcript, cfg)
                raise AgentLoopError(
                    f"three consecutive unparseable responses; last error: {exc}",
                    history,
                )
            continue

        repaired, changed = _repair(fp, proposal)
        result = evaluate(fp, repaired, task, cfg.radio)
        radio_map = compute_radio_map(fp, repaired, cfg.radio)
        covered_grid = radio_map.field_grid(radio_map.covered.astype(float), fill=0.0)
        map_summary = coverage_map_summary(fp, covered_grid, cfg.map_summary_max)
        feedback = (
            f"coverage={result.coverage:.4f} ior={result.ior:.4f} "
            f"tqs={result.tqs:.4f} constraints: {_constraint_summary(result)}"
        )
        history.append(
            HistoryEntry(iteration, repaired, result, feedback, changed)
        )
        record["repaired"] = changed
        record["deployment"] = repaired.as_array().tolist()
        record["evaluation"] = {
            "coverage": result.coverage, "ior": result.ior, "tqs": result.tqs,
            "success": result.success, "e_d": result.e_d, "e_b": result.e_b,
        }
        transcript.append(record)
        if result.coverage >= task.coverage_target:
            break

    _write_transcript(transcript, cfg)
    if len(history) == 0:
        raise AgentLoopError("no deployment was ever parsed", history)
    return history.best.deployment, history


def _write_transcript(transcript, cfg: AgentConfig) -> None:
    if cfg.transcript_path is None:
        return
    with open(cfg.transcript_path, "w") as fh:
        for record in transcript:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
