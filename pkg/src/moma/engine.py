"""Two-stage decision loop: pick (subtask, skill), then pick each parameter.

Modes:
  BUMBLE         images + marker ids + reasoning + long-term lessons
  COME           like BUMBLE without long-term lessons
  IM             text-only scene description, no lessons
  BUMBLE_noCoT   answers without the step-by-step reasoning instruction
  BUMBLE_noSoM   parameters are described in words and grounded by the detector
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import memory
from .backends import Backend, BackendTransportError, OracleBackend
from .memory import LongTermStore, ShortTermMemory, StepRecord, ltm_retrieve, render_lessons
from .percept import (
    MAX_MARKERS,
    Candidate,
    MarkerSet,
    Observation,
    PerceptionNoiseConfig,
    SceneImage,
    _sort_key,
    _tokens,
    annotate_markers,
    detector_query,
    observe,
)
from .policy import oracle_action
from .prompt import BackendRequest, Prompt
from .skills import SkillContext, SkillRegistry, SkillSpec, default_registry, execute
from .world import Outcome, WorldState, check_task_success, load_world

MODES = ("BUMBLE", "COME", "IM", "BUMBLE_noCoT", "BUMBLE_noSoM")

COT_INSTRUCTION = "Reason step by step about the scene, the history and the task before answering."
DIRECT_INSTRUCTION = "Give only the final answer block."
FORMAT_STAGE1 = ("End your reply with one fenced block:\n```answer\nsubtask: <the subtask you work on now>\n"
                 "skill: <skill_name>\n```")
FORMAT_MARKER = "End your reply with one fenced block:\n```answer\nmarker: <number of the chosen candidate>\n```"
FORMAT_DESCRIPTION = ("End your reply with one fenced block:\n```answer\ndescription: <short description of the "
                      "object or button to act on>\n```")
FORMAT_CHOICE = "End your reply with one fenced block:\n```answer\nchoice: <one of the listed options>\n```"
FORMAT_REMINDER = ("Your previous reply could not be parsed. Reply again and finish with exactly one fenced "
                   "answer block in the requested format.")

_ANSWER = re.compile(r"```answer[ \t]*\n(.*?)```", re.S)
_DESCRIBED_KINDS = ("object", "false_positive", "button", "door")


class ParseError(ValueError):
    pass


@dataclass
class EngineConfig:
    mode: str = "BUMBLE"
    max_steps: int = 25
    backend: Backend | None = None
    noise: PerceptionNoiseConfig = field(default_factory=PerceptionNoiseConfig)
    ltm: LongTermStore | None = None
    registry: SkillRegistry | None = None
    stm_images: int = memory.STM_IMAGE_BUDGET
    prompt_chars: int = 24000
    ik_failure_rate: float = 0.0
    record_truth: bool = False
    save_images: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.backend is None:
            self.backend = OracleBackend()
        if self.registry is None:
            self.registry = default_registry()

    @property
    def uses_images(self) -> bool:
        return self.mode != "IM"

    @property
    def uses_ltm(self) -> bool:
        return self.mode in ("BUMBLE", "BUMBLE_noCoT", "BUMBLE_noSoM")

    @property
    def cot(self) -> bool:
        return self.mode != "BUMBLE_noCoT"

    @property
    def som(self) -> bool:
        return self.mode != "BUMBLE_noSoM"


@dataclass
class Decision:
    reasoning: str
    subtask: str = ""
    skill: str = ""
    marker: int | None = None


@dataclass
class TrialState:
    trial_id: str
    instruction: str
    task: dict  # {"predicate": ..., "params": ...}
    stm: ShortTermMemory = field(default_factory=ShortTermMemory)
    transcript: list[dict] = field(default_factory=list)
    predictions: list[dict] = field(default_factory=list)
    truth: dict[str, Any] = field(default_factory=dict)
    done: bool = False
    log_dir: Path | None = None


@dataclass
class TrialResult:
    trial_id: str
    task_id: str
    instruction: str
    success: bool
    steps: int
    skills: list[str]
    failure_category: str
    wall_time: float
    final_state_hash: str
    invocations: list[dict] = field(default_factory=list)
    stm: list[dict] = field(default_factory=list)
    semantic_violation: bool = False
    held_object: str | None = None
    held_wrong: bool = False
    relevant_floors: list[int] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialResult":
        return cls(**dict(d))


# ---------------------------------------------------------------- parsing


def _answer_fields(text: str) -> dict[str, str]:
    blocks = _ANSWER.findall(text or "")
    if not blocks:
        raise ParseError("no answer block")
    out = {}
    for line in blocks[-1].splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip().lower()] = v.strip()
    return out


def parse_stage1(text: str, skills=None) -> tuple[str, str]:
    f = _answer_fields(text)
    skill = f.get("skill", "").strip().strip("`'\"").lower()
    if not skill:
        raise ParseError("missing skill field")
    if skills is not None and skill not in skills:
        raise ParseError(f"unknown skill {skill!r}")
    return f.get("subtask", ""), skill


def parse_stage2(text: str, marker_ids=None) -> int:
    f = _answer_fields(text)
    m = re.search(r"\d+", f.get("marker", ""))
    if not m:
        raise ParseError("missing marker field")
    mid = int(m.group())
    if marker_ids is not None and mid not in set(marker_ids):
        raise ParseError(f"marker {mid} not offered")
    return mid


def parse_choice(text: str) -> tuple[str, str]:
    f = _answer_fields(text)
    for key in ("description", "choice"):
        if f.get(key):
            return key, f[key]
    raise ParseError("missing description/choice field")


def resolve_description(obs: Observation, candidates: list[Candidate], field_name: str, text: str) -> Candidate:
    """Ground a free-text answer onto a candidate the way a text-prompted detector would."""
    words = set(_tokens(text))
    if field_name == "choice" or not any(c.kind in _DESCRIBED_KINDS for c in candidates):
        low = text.strip().lower()
        for c in candidates:
            if str(c.value).lower() == low or c.label.lower() == low:
                return c
        for c in candidates:
            if str(c.value).lower() in words:
                return c
        raise ParseError(f"choice {text!r} matches no option")
    allowed = {c.value: c for c in candidates}
    hits = [allowed[d.entity_id] for d in detector_query(obs, text) if d.entity_id in allowed]
    for c in hits:
        label = c.detection.label if c.detection is not None else c.label
        if set(_tokens(label)) <= words:
            return c
    if hits:
        return hits[0]
    raise ParseError(f"description {text!r} grounds to no candidate")


# ---------------------------------------------------------------- prompts


def _robot_line(ws: WorldState, observation: Observation) -> str:
    held = ws.objects[ws.robot.held_object].category if ws.robot.held_object else "nothing"
    return (f"Robot state: floor {observation.floor}, {observation.location or 'unknown location'}, "
            f"facing {observation.robot_heading}, holding {held}.")


def build_stage1_prompt(instruction: str, location: str, observation: Observation, skill_descriptions: str,
                        stm: ShortTermMemory, lessons: list, mode: str, image_budget: int = memory.STM_IMAGE_BUDGET,
                        max_chars: int = 24000) -> Prompt:
    p = Prompt("stage1", budget={"max_chars": max_chars, "images": image_budget})
    p.add_text("You control a mobile manipulator inside a multi-floor building. Choose the next skill.")
    p.add_text(f"Task: {instruction}")
    p.add_text(location)
    p.add_text("Available skills:\n" + skill_descriptions)
    if mode != "IM":
        p.add_image(SceneImage(observation))
    p.add_text("Current scene:\n" + observation.scene_table())
    if mode in ("BUMBLE", "BUMBLE_noCoT", "BUMBLE_noSoM") and lessons:
        p.add_text(render_lessons(lessons, memory.SKILL_SELECTION))
    tail = (COT_INSTRUCTION if mode != "BUMBLE_noCoT" else DIRECT_INSTRUCTION) + "\n" + FORMAT_STAGE1
    used = sum(len(x.text) for x in p.parts) + len(tail)
    frag = stm.render(image_budget if mode != "IM" else 0, max_chars=max(200, max_chars - used))
    p.add_text(frag.text)
    for img in frag.images:
        p.add_image(img)
    p.add_text(tail)
    return p


def _option_lines(candidates: list[Candidate]) -> str:
    lines = []
    for c in sorted(candidates, key=_sort_key):
        if c.kind in _DESCRIBED_KINDS:
            lines.append(f"- {c.annotation()}")
        else:
            lines.append(f"- {c.value}: {c.label}")
    return "\n".join(lines)


def build_stage2_prompt(instruction: str, subtask: str, skill: SkillSpec, observation: Observation,
                        markers: MarkerSet | None, candidates: list[Candidate], lessons: list, mode: str,
                        stage_index: int = 0, chosen: tuple = ()) -> Prompt:
    kind = skill.parameter_kinds[stage_index]
    p = Prompt("stage2", budget={"parameter_kind": kind, "stage_index": stage_index})
    p.add_text(f"Task: {instruction}\nCurrent subtask: {subtask}\nChosen skill:\n{skill.description}")
    if chosen:
        p.add_text("Parameters fixed so far: " + ", ".join(str(v) for v in chosen))
    som = mode != "BUMBLE_noSoM"
    if mode != "IM":
        p.add_image(SceneImage(observation, markers if som else None))
    if som:
        p.add_text(f"Candidates for the {kind} parameter (marked in the image):\n" + markers.table())
    else:
        p.add_text(f"Options for the {kind} parameter:\n" + _option_lines(candidates))
    if mode in ("BUMBLE", "BUMBLE_noCoT", "BUMBLE_noSoM") and lessons:
        p.add_text(render_lessons(lessons, skill.name))
    if som:
        fmt = FORMAT_MARKER
    elif any(c.kind in _DESCRIBED_KINDS for c in candidates):
        fmt = FORMAT_DESCRIPTION
    else:
        fmt = FORMAT_CHOICE
    p.add_text((COT_INSTRUCTION if mode != "BUMBLE_noCoT" else DIRECT_INSTRUCTION) + "\n" + fmt)
    return p


# ----------------------------------------------------------------- engine


def _ask(config: EngineConfig, trial: TrialState, prompt: Prompt, meta: dict, parse, step: int):
    """Query with one format-reminder retry; returns (parsed, response text)."""
    for attempt in range(2):
        if attempt:
            prompt = Prompt(prompt.stage, list(prompt.parts), dict(prompt.budget))
            prompt.add_text(FORMAT_REMINDER)
        req = BackendRequest(prompt, prompt.stage, meta)
        resp = config.backend.complete(req)
        trial.transcript.append({"trial": trial.trial_id, "step": step, "stage": prompt.stage,
                                 "attempt": attempt, "request_hash": req.request_hash,
                                 "n_images": prompt.n_images, "prompt": prompt.text(),
                                 "response": resp.text, "latency": round(resp.latency, 6),
                                 "provider": resp.provider})
        try:
            return parse(resp.text), len(trial.transcript) - 1
        except ParseError as exc:
            err = exc
    raise ParseError(f"parse failure: {err}")


def _cap_candidates(cands: list[Candidate]) -> list[Candidate]:
    if len(cands) <= MAX_MARKERS:
        return cands
    return sorted(cands, key=_sort_key)[:MAX_MARKERS]


def _save_scene(trial: TrialState, image: SceneImage, name: str) -> str | None:
    if trial.log_dir is None:
        return None
    path = trial.log_dir / "scenes" / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(image.png())
    return str(path.relative_to(trial.log_dir))


def decide_and_act(ws: WorldState, config: EngineConfig, trial: TrialState) -> StepRecord:
    """One perceive -> decide -> act cycle; returns the recorded step (or a terminal done record)."""
    step = len(trial.stm) + 1
    if check_task_success(ws, trial.task):
        trial.done = True
        return StepRecord(step, "task complete", "done", [], Outcome.ok())
    obs = observe(ws, config.noise, step)
    scene = SceneImage(obs)
    scene_ref = {"digest": scene.digest, "table": obs.scene_table()}
    if config.save_images:
        scene_ref["image"] = _save_scene(trial, scene, f"step_{step:03d}.png")
    registry = config.registry
    base_meta = {"ws": ws, "task": trial.task, "stm": list(trial.stm), "observation": obs,
                 "skills": registry.names(), "cot": config.cot, "mode": config.mode}
    truth_action = oracle_action(ws, trial.task, list(trial.stm), obs) if config.record_truth else None
    location = _robot_line(ws, obs)
    refs: list[int] = []

    def finish(record: StepRecord) -> StepRecord:
        record.scene_image = scene
        trial.stm.append(record)
        return record

    lessons = ltm_retrieve(config.ltm, memory.SKILL_SELECTION) if config.uses_ltm else []
    p1 = build_stage1_prompt(trial.instruction, location, obs, registry.describe_all(), trial.stm, lessons,
                             config.mode, config.stm_images, config.prompt_chars)
    try:
        (subtask, skill_name), ref = _ask(config, trial, p1, dict(base_meta, stage="stage1"),
                                          lambda t: parse_stage1(t, registry.names()), step)
    except ParseError as exc:
        return finish(StepRecord(step, "", "none", [], Outcome.fail("parse_failure", str(exc)), scene_ref))
    except BackendTransportError as exc:
        return finish(StepRecord(step, "", "none", [], Outcome.fail("aborted", f"backend transport error: {exc}"),
                                 scene_ref, aborted=True))
    refs.append(ref)
    pid = f"{trial.trial_id}:{step}:skill"
    trial.predictions.append({"id": pid, "key": memory.SKILL_SELECTION, "instruction": trial.instruction,
                              "scene": obs.scene_table(), "subtask": subtask, "predicted": skill_name})
    if truth_action is not None:
        trial.truth[pid] = truth_action.skill

    skill = registry.get(skill_name)
    ctx = SkillContext(ws, obs, step, config.ik_failure_rate)
    params: list[dict] = []
    chosen: list = []
    for idx, kind in enumerate(skill.parameter_kinds):
        cands = _cap_candidates(skill.candidate_generator(ctx, idx, tuple(chosen)))
        if not cands:
            return finish(StepRecord(step, subtask, skill_name, params, Outcome.fail("no_candidates", "no candidates"),
                                     scene_ref, refs))
        markers, image = annotate_markers(obs, cands)
        lessons = ltm_retrieve(config.ltm, skill_name) if config.uses_ltm else []
        p2 = build_stage2_prompt(trial.instruction, subtask, skill, obs, markers, cands, lessons, config.mode,
                                 idx, tuple(chosen))
        meta = dict(base_meta, stage="stage2", skill=skill_name, stage_index=idx, chosen=tuple(chosen),
                    candidates=cands, markers=markers if config.som else None)
        try:
            if config.som:
                mid, ref = _ask(config, trial, p2, meta, lambda t: parse_stage2(t, markers.ids()), step)
                cand = markers.resolve(mid)
            else:
                (fname, text), ref = _ask(config, trial, p2, meta, parse_choice, step)
                cand = resolve_description(obs, cands, fname, text)
                mid = None
        except ParseError as exc:
            return finish(StepRecord(step, subtask, skill_name, params, Outcome.fail("parse_failure", str(exc)),
                                     scene_ref, refs))
        except BackendTransportError as exc:
            return finish(StepRecord(step, subtask, skill_name, params,
                                     Outcome.fail("aborted", f"backend transport error: {exc}"), scene_ref, refs,
                                     aborted=True))
        refs.append(ref)
        chosen.append(cand.value)
        params.append({"marker": mid, "value": cand.value, "label": cand.label})
        pid = f"{trial.trial_id}:{step}:{skill_name}:{idx}"
        trial.predictions.append({"id": pid, "key": skill_name, "instruction": trial.instruction,
                                  "scene": markers.table(), "subtask": subtask, "skill": skill_name,
                                  "predicted": cand.value})
        if truth_action is not None and truth_action.skill == skill_name and idx < len(truth_action.params):
            trial.truth[pid] = truth_action.params[idx]
        if config.save_images and trial.log_dir is not None:
            _save_scene(trial, image, f"step_{step:03d}_param{idx}.png")

    outcome = execute(skill, ctx, tuple(chosen))
    return finish(StepRecord(step, subtask, skill_name, params, outcome, scene_ref, refs))


# ------------------------------------------------------------------ trials


def task_dict(task) -> tuple[str, str, dict]:
    """(task id, instruction, predicate spec) from a TaskSpec or a plain mapping."""
    if hasattr(task, "predicate_spec"):
        return task.task_id, task.instruction, task.predicate_spec()
    return (task.get("task_id", "custom"), task["instruction"],
            {"predicate": task["predicate"], "params": task["params"]})


def relevant_floors(ws: WorldState, spec: Mapping) -> list[int]:
    floors = {ws.robot.floor}
    params = spec["params"]
    if spec["predicate"] == "retrieve":
        floors.add(ws.building.landmarks[params["deliver_to"]].floor)
        floors.update(o.floor for o in ws.objects.values() if o.floor is not None and o.matches(params["target"]))
    elif spec["predicate"] == "rearrange":
        floors.add(params["region"][0])
    return sorted(floors)


def _write_logs(trial: TrialState, result: TrialResult) -> None:
    d = trial.log_dir
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "steps.jsonl", "w") as fh:
        for rec in trial.stm:
            fh.write(json.dumps(rec.to_dict(), default=str) + "\n")
    with open(d / "transcript.jsonl", "w") as fh:
        for t in trial.transcript:
            fh.write(json.dumps(t, default=str) + "\n")
    with open(d / "predictions.jsonl", "w") as fh:
        for p in trial.predictions:
            fh.write(json.dumps(p, default=str) + "\n")
    if trial.truth:
        (d / "truth.json").write_text(json.dumps(trial.truth, indent=1, default=str))
    (d / "result.json").write_text(json.dumps(result.to_dict(), indent=1, default=str))


def run_trial(task, scenario, config: EngineConfig, trial_id: str = "trial",
              log_dir: str | Path | None = None, meta: Mapping | None = None) -> TrialResult:
    """Loop decide_and_act until the goal predicate holds or the step budget runs out."""
    from .harness.metrics import categorize_failure

    t0 = time.perf_counter()
    ws = scenario if isinstance(scenario, WorldState) else load_world(scenario)
    task_id, instruction, spec = task_dict(task)
    floors = relevant_floors(ws, spec)
    trial = TrialState(trial_id, instruction, spec, log_dir=Path(log_dir) if log_dir else None)
    semantic = False
    while len(trial.stm) < config.max_steps:
        rec = decide_and_act(ws, config, trial)
        if trial.done:
            break
        if "semantic_violation" in rec.outcome.flags:
            semantic = True
    predicate = check_task_success(ws, spec)
    held = ws.robot.held_object
    held_wrong = False
    if held is not None and spec["predicate"] == "retrieve":
        held_wrong = not ws.objects[held].matches(spec["params"]["target"])
    success = predicate and not semantic
    result = TrialResult(
        trial_id=trial_id, task_id=task_id, instruction=instruction, success=success, steps=len(trial.stm),
        skills=[r.skill for r in trial.stm], failure_category="none", wall_time=time.perf_counter() - t0,
        final_state_hash=ws.state_hash(),
        invocations=[{"skill": r.skill, "subtask": r.subtask, "parameter": [p["value"] for p in r.parameter],
                      "step": r.index} for r in trial.stm],
        stm=trial.stm.to_list(), semantic_violation=semantic, held_object=held, held_wrong=held_wrong,
        relevant_floors=floors, meta=dict(meta or {}, predicate_holds=predicate, mode=config.mode))
    if not success:
        result.failure_category = categorize_failure(result, trial.stm)
    if trial.log_dir is not None:
        _write_logs(trial, result)
    result.trial = trial  # in-memory handle (prompts, transcript); not a serialized field
    return result
