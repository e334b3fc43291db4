import logging
import os
import shutil
import subprocess
import uuid
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

from config import RESULTS_DIR, VERSION, WORKERS
from formatter import read_json, write_json
from harness import RunRecord, run_offline_toy, run_online
from schemas import ConfigError, ExperimentConfig

logger = logging.getLogger(__name__)


def artifact_version() -> str:
    """`git describe` of the working tree, or the package version outside a checkout."""
    repo = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=repo, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return VERSION
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else VERSION


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class RunSession:
    """One CLI invocation's output directory and its manifest."""

    def __init__(self, command: str, results_dir: str = None):
        self.command = command
        self.started_at = _utc_now()
        self.session_id = f"{command}-{self.started_at:%Y%m%dT%H%M%SZ}-{uuid.uuid4().hex[:8]}"
        self.output_dir = os.path.join(results_dir or RESULTS_DIR, self.session_id)
        self.manifest_path = os.path.join(self.output_dir, "manifest.json")
        self.outputs = []
        self.manifest = {}

    def start(self, config: dict, seeds: list, **extra) -> str:
        """
        Create the output directory and write the opening manifest.

        Args:
            config: Effective configuration, echoed verbatim
            seeds: Seed list the invocation will run
            **extra: Additional manifest fields

        Returns:
            Output directory path
        """
        os.makedirs(self.output_dir, exist_ok=False)
        self.manifest = {
            "command": self.command,
            "session_id": self.session_id,
            "version": artifact_version(),
            "config": config,
            "seeds": list(seeds),
            "started_at": self.started_at.isoformat(),
            "ended_at": None,
            "status": "running",
            "outputs": [],
            **extra,
        }
        write_json(self.manifest_path, self.manifest)
        logger.info(f"Session {self.session_id}: writing to {self.output_dir}")
        return self.output_dir

    def add_outputs(self, paths):
        if isinstance(paths, str):
            paths = [paths]
        self.outputs.extend(os.path.relpath(p, self.output_dir) for p in paths)

    def finalize(self, status: str = "ok", **extra):
        self.manifest.update(
            ended_at=_utc_now().isoformat(),
            status=status,
            outputs=sorted(self.outputs),
            **extra,
        )
        write_json(self.manifest_path, self.manifest)
        logger.info(f"Session {self.session_id}: finalized with status {status}, {len(self.outputs)} files")

    def cleanup(self):
        """Remove everything the session wrote."""
        if os.path.exists(self.output_dir):
            shutil.rmtree(self.output_dir)
            logger.info(f"Session {self.session_id}: Deleted output directory")


def load_manifest_config(path: str) -> tuple:
    """(ExperimentConfig, seeds) echoed by an earlier `run` manifest."""
    if not os.path.exists(path):
        raise ConfigError(f"Manifest not found: {path}")
    manifest = read_json(path)
    if manifest.get("command") != "run":
        raise ConfigError(f"{path} is not an online run manifest")
    try:
        config = ExperimentConfig.model_validate(manifest["config"])
    except Exception as e:
        raise ConfigError(f"Failed to load config from {path}: {e}") from e
    return config, manifest["seeds"]


def _run_seed(config: ExperimentConfig, seed: int) -> RunRecord:
    seeded = config.model_copy(update={"seed": seed})
    try:
        return run_online(seeded)
    except Exception as e:
        # one broken seed must not take its siblings down
        logger.error(f"Seed {seed}: run failed - {str(e)}")
        return RunRecord(
            seed=seed,
            sampler=config.sampler.label,
            env=config.env,
            diverged=True,
            divergence_reason=f"error: {e}",
        )


def _map(fn, config, seeds: list, workers: int) -> list:
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            return list(pool.map(fn, [config] * len(seeds), seeds))
    return [fn(config, seed) for seed in seeds]


def run_multi_seed(config: ExperimentConfig, seeds: list, workers: int = WORKERS) -> list:
    """
    Independent online runs, one per seed, returned in seed order.

    Args:
        config: Validated experiment configuration (its own seed is ignored)
        seeds: Seeds to run; duplicates produce identical records
        workers: Process-pool size; 1 runs in-process

    Returns:
        List of RunRecord, failures flagged rather than raised
    """
    if not seeds:
        raise ValueError("seeds must be nonempty")

    logger.info(f"Running {len(seeds)} seeds for {config.sampler.label} on {config.env} with {workers} workers")
    records = _map(_run_seed, config, list(seeds), workers)
    flagged = sum(r.diverged for r in records)
    if flagged:
        logger.warning(f"{flagged} of {len(records)} seeds diverged or failed")
    return records


def _toy_seed(config, seed: int):
    return run_offline_toy(config.model_copy(update={"seed": seed}))


def run_toy_seeds(config, seeds: list, workers: int = WORKERS) -> list:
    """Offline toy runs, one per seed, returned in seed order."""
    if not seeds:
        raise ValueError("seeds must be nonempty")
    return _map(_toy_seed, config, list(seeds), workers)
