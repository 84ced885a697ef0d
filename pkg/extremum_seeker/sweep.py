"""Parameter sweeps: one scenario run per value on a small pool of worker threads."""

import csv
import logging
import queue
import threading
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional

from .config import SECTIONS, ScenarioConfig, apply_overrides, validate
from .errors import ConfigError, SimulationFault, ValidationError
from .scenarios import RunMetrics, run_scenario

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "value", "status", "first_entry_time", "oscillation_amplitude",
    "switch_count", "max_abs_error", "residual_band", "error",
)


@dataclass
class SweepResult:
    """Outcome of the run for one swept value."""
    value: object
    status: str  # completed, diverged or failed
    metrics: Optional[RunMetrics] = None
    error: str = ""

    def summary_row(self) -> List[str]:
        m = self.metrics
        if m is None:
            return [str(self.value), self.status, "", "", "", "", "", self.error]
        entry = "" if m.first_entry_time is None else repr(m.first_entry_time)
        return [
            str(self.value), self.status, entry, repr(m.oscillation_amplitude),
            str(m.switch_count), repr(m.max_abs_error), repr(m.residual_band), self.error,
        ]


class SweepRunner:
    """Runs a scenario once per parameter value, several runs at a time.

    Runs share nothing but the results table, which is guarded by a lock.
    """

    def __init__(self, config: ScenarioConfig, param: str, workers: int = 4):
        section, _, key = param.partition(".")
        if section not in SECTIONS or key not in {f.name for f in fields(SECTIONS[section])}:
            raise ConfigError(f"Unknown key '{param}'")
        self.config = config
        self.param = param
        self.workers = max(1, workers)
        self.results: Dict[int, SweepResult] = {}
        self._lock = threading.Lock()

    def _run_one(self, index: int, value, out_dir: Optional[Path]) -> None:
        try:
            scenario = apply_overrides(self.config, [f"{self.param}={value}"])
            violations = validate(scenario)
            if violations:
                raise ValidationError(violations)
            run_dir = None if out_dir is None else out_dir / f"run_{index:03d}"
            run = run_scenario(scenario, run_dir)
            result = SweepResult(value, run.status, run.metrics)
        except (ConfigError, SimulationFault, ValueError) as err:
            logger.warning("Sweep run %s=%s failed: %s", self.param, value, err)
            result = SweepResult(value, "failed", error=str(err).splitlines()[0])
        with self._lock:
            self.results[index] = result

    def _worker(self, jobs: "queue.Queue", out_dir: Optional[Path]) -> None:
        while True:
            try:
                index, value = jobs.get_nowait()
            except queue.Empty:
                return
            self._run_one(index, value, out_dir)

    def run(self, values: List[str], out_dir: Optional[Path] = None) -> List[SweepResult]:
        """Run every value; results come back in input order."""
        if not values:
            raise ConfigError("Sweep needs at least one value")
        jobs: queue.Queue = queue.Queue()
        for item in enumerate(values):
            jobs.put(item)
        threads = [
            threading.Thread(target=self._worker, args=(jobs, out_dir), daemon=True)
            for _ in range(min(self.workers, len(values)))
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        with self._lock:
            return [self.results[i] for i in range(len(values))]

    def get_status(self) -> Dict[str, int]:
        with self._lock:
            done = list(self.results.values())
        return {
            "finished": len(done),
            "failed": sum(1 for r in done if r.status == "failed"),
        }


def write_summary(results: List[SweepResult], path: Path) -> Path:
    """Write one summary row per sweep value, in value order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(r.summary_row() for r in results)
    return path


def run_sweep(config: ScenarioConfig, param: str, values: List[str],
              out_dir: Optional[Path] = None, workers: int = 4) -> List[SweepResult]:
    """Run one scenario per value of a dotted parameter.

    Args:
        config: Base scenario.
        param: Dotted key such as ``controller.mu``.
        values: Raw values, parsed like command-line overrides.
        out_dir: When given, each run goes to ``out_dir/<index>`` and summary.csv is written.
        workers: Size of the thread pool.

    Returns:
        One SweepResult per value, in input order.

    Raises:
        ConfigError: If ``param`` is not a known key or ``values`` is empty.
    """
    results = SweepRunner(config, param, workers).run(values, out_dir)
    if out_dir is not None:
        write_summary(results, Path(out_dir) / "summary.csv")
    return results
