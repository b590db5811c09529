"""Batch episode running and comparison metrics.

A batch runs one episode per map (cycling when more episodes than maps are
requested), with per-episode seeds derived from the batch seed by the shared
mixing rule, so a batch is reproducible from a single recorded seed and is
deterministic regardless of worker count. Records serialize to a fixed-column
CSV; reduction reports compare two configurations over the episodes where
both succeeded, mirroring the usual benchmarking convention for mapping-time
savings.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .environment import Episode, EpisodeConfig
from .floorplan import DatasetManifest, MapFormatError, import_raster
from .frontier import COMPLETE, STUCK, FrontierConfig, FrontierPlanner
from .grid import Action, GroundTruthMap, coverage_ratio
from .predictor import f1_score, predictor_label
from .seeding import derive_seed

RECORDS_HEADER = "map_id,planner,predictor,target,steps,success,final_coverage,failure_class,f1"
CURVES_HEADER = "step,mean_coverage,std_coverage"

FAILURE_NONE = "none"
FAILURE_SEALED = "sealed-room"
FAILURE_BUDGET = "budget-exhausted"


class RandomWalkPlanner:
    """Uniform random action source; a scripted baseline and collision
    exerciser, never reports completion."""

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)

    def next_action(self, grid, pose) -> Action:
        return Action(int(self._rng.integers(8)))


PLANNER_NAMES = ("frontier", "nearest", "random")


def make_planner(name: str, cfg: EpisodeConfig, seed: int, frontier_cfg: FrontierConfig | None = None):
    if name == "frontier":
        return FrontierPlanner(frontier_cfg or FrontierConfig(), cfg.sensor)
    if name == "nearest":
        from .frontier import UtilityMode

        base = frontier_cfg or FrontierConfig()
        return FrontierPlanner(
            replace(base, utility=UtilityMode.NEAREST_FRONTIER), cfg.sensor
        )
    if name == "random":
        return RandomWalkPlanner(derive_seed(seed, 1))
    raise ValueError(f"unknown planner {name!r}; expected one of {PLANNER_NAMES}")


@dataclass
class EpisodeRecord:
    map_id: str
    planner: str
    predictor: str
    coverage_target: float
    seed: int
    steps: int
    success: bool
    final_coverage: float
    failure_class: str
    f1: float
    interior_area: int = 0
    observed_coverage: float = 0.0
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    coverages: list[float] = field(default_factory=list)
    path: list[tuple[int, int]] = field(default_factory=list)

    def csv_row(self) -> str:
        return ",".join(
            [
                self.map_id,
                self.planner,
                self.predictor,
                repr(self.coverage_target),
                str(self.steps),
                "true" if self.success else "false",
                repr(self.final_coverage),
                self.failure_class,
                repr(self.f1),
            ]
        )


def run_episode(
    gt: GroundTruthMap,
    map_id: str,
    cfg: EpisodeConfig,
    planner_name: str = "frontier",
    frontier_cfg: FrontierConfig | None = None,
) -> EpisodeRecord:
    """Run one planner-driven episode to termination and summarize it."""
    planner = make_planner(planner_name, cfg, cfg.seed, frontier_cfg)
    with Episode(gt, cfg) as env:
        state, _ = env.reset()
        coverages = [state.exposure]
        actions: list[int] = []
        rewards: list[float] = []
        path = [(state.pose.x, state.pose.y)]
        planner_halt = False
        while not state.done:
            decision = planner.next_action(state.synthesized, state.pose)
            if decision in (COMPLETE, STUCK):
                planner_halt = True
                break
            result = env.step(decision)
            actions.append(int(decision))
            rewards.append(result.reward)
            coverages.append(state.exposure)
            path.append((state.pose.x, state.pose.y))
        success = state.exposure >= cfg.coverage_target
        if success:
            failure = FAILURE_NONE
        elif planner_halt:
            failure = FAILURE_SEALED
        else:
            failure = FAILURE_BUDGET
        return EpisodeRecord(
            map_id=map_id,
            planner=planner_name,
            predictor=predictor_label(cfg.predictor),
            coverage_target=cfg.coverage_target,
            seed=cfg.seed,
            steps=state.step_count,
            success=success,
            final_coverage=state.exposure,
            failure_class=failure,
            f1=f1_score(state.synthesized, gt).score,
            interior_area=gt.interior_area,
            observed_coverage=coverage_ratio(state.obs, gt),
            actions=actions,
            rewards=rewards,
            coverages=coverages,
            path=path,
        )


def _episode_task(args: tuple) -> EpisodeRecord | tuple[str, str, str]:
    map_path, map_id, cfg, planner_name, frontier_cfg = args
    try:
        gt = import_raster(map_path)
    except (OSError, MapFormatError) as exc:
        return ("skip", map_id, str(exc))
    return run_episode(gt, map_id, cfg, planner_name, frontier_cfg)


@dataclass
class BatchResult:
    records: list[EpisodeRecord]
    skipped: list[tuple[str, str]]


def run_batch(
    manifest: DatasetManifest,
    cfg: EpisodeConfig,
    planner: str = "frontier",
    episodes: int | None = None,
    jobs: int = 1,
    frontier_cfg: FrontierConfig | None = None,
) -> BatchResult:
    """Run ``episodes`` episodes over the dataset (default: one per map).

    ``cfg.seed`` is the batch seed; episode ``i`` runs with seed
    ``derive_seed(cfg.seed, i)`` on map ``i mod len(maps)``. Unreadable maps
    are skipped and reported in the result. Records come back in episode
    order whatever the worker count.
    """
    entries = manifest.entries
    if not entries:
        return BatchResult([], [])
    if episodes is None:
        episodes = len(entries)
    tasks = []
    for i in range(episodes):
        entry = entries[i % len(entries)]
        episode_cfg = replace(cfg, seed=derive_seed(cfg.seed, i))
        tasks.append(
            (str(manifest.root / entry), Path(entry).stem, episode_cfg, planner, frontier_cfg)
        )
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_episode_task, tasks, chunksize=4))
    else:
        outcomes = [_episode_task(t) for t in tasks]
    records: list[EpisodeRecord] = []
    skipped: list[tuple[str, str]] = []
    for outcome in outcomes:
        if isinstance(outcome, EpisodeRecord):
            records.append(outcome)
        else:
            skipped.append((outcome[1], outcome[2]))
    return BatchResult(records, skipped)


def records_to_csv(records: list[EpisodeRecord], path: str | Path) -> None:
    lines = [RECORDS_HEADER] + [r.csv_row() for r in records]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def records_from_csv(path: str | Path) -> list[EpisodeRecord]:
    """Load the summary columns back; per-step sequences are not persisted in
    the records CSV."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != RECORDS_HEADER:
        raise ValueError(f"{path}: not a records CSV")
    records = []
    for line in lines[1:]:
        (
            map_id,
            planner,
            predictor,
            target,
            steps,
            success,
            final_coverage,
            failure_class,
            f1,
        ) = line.split(",")
        records.append(
            EpisodeRecord(
                map_id=map_id,
                planner=planner,
                predictor=predictor,
                coverage_target=float(target),
                seed=0,
                steps=int(steps),
                success=success == "true",
                final_coverage=float(final_coverage),
                failure_class=failure_class,
                f1=float(f1),
            )
        )
    return records


def success_rate(records: list[EpisodeRecord]) -> float:
    if not records:
        return 0.0
    return sum(r.success for r in records) / len(records)


def normalized_steps(record: EpisodeRecord, gt: GroundTruthMap) -> float:
    """Steps scaled to a 1,000-cell building; defined for successful episodes
    only."""
    if not record.success:
        raise ValueError("normalized steps are defined for successful episodes only")
    return record.steps * 1000.0 / gt.interior_area


@dataclass
class ExposureCurve:
    """Mean and spread of coverage per step index across episodes; episodes
    that finish early keep contributing their final coverage."""

    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        lines = [CURVES_HEADER]
        for s, m, d in zip(self.steps.tolist(), self.mean.tolist(), self.std.tolist()):
            lines.append(f"{s},{m!r},{d!r}")
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def exposure_curves(records: list[EpisodeRecord], horizon: int | None = None) -> ExposureCurve:
    if not records:
        raise ValueError("no records")
    if any(not r.coverages for r in records):
        raise ValueError("records lack per-step coverage sequences")
    if horizon is None:
        horizon = max(len(r.coverages) - 1 for r in records)
    table = np.empty((len(records), horizon + 1))
    for i, record in enumerate(records):
        seq = np.asarray(record.coverages)
        if len(seq) >= horizon + 1:
            table[i] = seq[: horizon + 1]
        else:
            table[i, : len(seq)] = seq
            table[i, len(seq) :] = seq[-1]
    return ExposureCurve(
        steps=np.arange(horizon + 1),
        mean=table.mean(axis=0),
        std=table.std(axis=0),
    )


@dataclass
class ComparisonReport:
    baseline_label: str
    candidate_label: str
    common_successes: int
    no_common_successes: bool
    reduction_mean_pct: float
    reduction_std_pct: float
    baseline_steps_mean: float
    baseline_steps_std: float
    candidate_steps_mean: float
    candidate_steps_std: float
    baseline_success_rate: float
    candidate_success_rate: float
    baseline_normalized_mean: float | None = None
    candidate_normalized_mean: float | None = None
    baseline_curve: ExposureCurve | None = None
    candidate_curve: ExposureCurve | None = None

    def to_csv(self, path: str | Path) -> None:
        rows = [
            ("baseline", self.baseline_label),
            ("candidate", self.candidate_label),
            ("common_successes", str(self.common_successes)),
            ("no_common_successes", "true" if self.no_common_successes else "false"),
            ("reduction_mean_pct", repr(self.reduction_mean_pct)),
            ("reduction_std_pct", repr(self.reduction_std_pct)),
            ("baseline_steps_mean", repr(self.baseline_steps_mean)),
            ("baseline_steps_std", repr(self.baseline_steps_std)),
            ("candidate_steps_mean", repr(self.candidate_steps_mean)),
            ("candidate_steps_std", repr(self.candidate_steps_std)),
            ("baseline_success_rate", repr(self.baseline_success_rate)),
            ("candidate_success_rate", repr(self.candidate_success_rate)),
            ("baseline_normalized_mean", repr(self.baseline_normalized_mean)),
            ("candidate_normalized_mean", repr(self.candidate_normalized_mean)),
        ]
        lines = ["key,value"] + [f"{k},{v}" for k, v in rows]
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def _label(records: list[EpisodeRecord]) -> str:
    if not records:
        return "empty"
    return f"{records[0].planner}+{records[0].predictor}"


def _steps_stats(records: list[EpisodeRecord]) -> tuple[float, float]:
    steps = [r.steps for r in records if r.success]
    if not steps:
        return float("nan"), float("nan")
    return float(np.mean(steps)), float(np.std(steps))


def _normalized_mean(records: list[EpisodeRecord], areas: dict[str, int] | None) -> float | None:
    if areas is None:
        return None
    values = [
        r.steps * 1000.0 / areas[r.map_id]
        for r in records
        if r.success and r.map_id in areas
    ]
    return float(np.mean(values)) if values else None


def reduction_report(
    baseline: list[EpisodeRecord],
    candidate: list[EpisodeRecord],
    areas: dict[str, int] | None = None,
) -> ComparisonReport:
    """Time-saving of ``candidate`` relative to ``baseline``.

    Episodes join on map id and the reduction statistics cover only maps
    where both configurations succeeded. Step mean/std per configuration are
    over that configuration's successful episodes; success rates are over all
    episodes. ``reduction_std_pct`` is the spread of the per-map reductions
    (the per-configuration step spread is reported separately).
    """
    base_by_map = {r.map_id: r for r in baseline}
    cand_by_map = {r.map_id: r for r in candidate}
    common = 0
    reductions = []
    for map_id, base in base_by_map.items():
        cand = cand_by_map.get(map_id)
        if cand is None or not (base.success and cand.success):
            continue
        common += 1
        if base.steps == 0:
            # Zero-step baselines leave the ratio undefined unless the
            # candidate is also instant.
            if cand.steps == 0:
                reductions.append(0.0)
            continue
        reductions.append((base.steps - cand.steps) / base.steps * 100.0)
    base_mean, base_std = _steps_stats(baseline)
    cand_mean, cand_std = _steps_stats(candidate)
    has_curves = all(r.coverages for r in baseline) and all(r.coverages for r in candidate)
    return ComparisonReport(
        baseline_label=_label(baseline),
        candidate_label=_label(candidate),
        common_successes=common,
        no_common_successes=common == 0,
        reduction_mean_pct=float(np.mean(reductions)) if reductions else float("nan"),
        reduction_std_pct=float(np.std(reductions)) if reductions else float("nan"),
        baseline_steps_mean=base_mean,
        baseline_steps_std=base_std,
        candidate_steps_mean=cand_mean,
        candidate_steps_std=cand_std,
        baseline_success_rate=success_rate(baseline),
        candidate_success_rate=success_rate(candidate),
        baseline_normalized_mean=_normalized_mean(baseline, areas),
        candidate_normalized_mean=_normalized_mean(candidate, areas),
        baseline_curve=exposure_curves(baseline) if has_curves and baseline else None,
        candidate_curve=exposure_curves(candidate) if has_curves and candidate else None,
    )
