from __future__ import annotations

import abc
import asyncio
import csv
import dataclasses
import io
import json
import logging
import typing as tp
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .pool import Pool
from .rng import derive_seed

if tp.TYPE_CHECKING:
    from .potentials import Potential

logger = logging.getLogger("sfsopt")


CONFIG_TV = tp.TypeVar("CONFIG_TV")


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, iteration: int = -1) -> None:
        super().__init__(message)
        self.iteration = iteration

    def __reduce__(self):
        return self.__class__, (str(self), self.iteration)


class RunError(RuntimeError):
    def __init__(self, message: str, run_index: int = -1) -> None:
        super().__init__(message)
        self.run_index = run_index

    def __reduce__(self):
        return self.__class__, (str(self), self.run_index)


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None) -> None:
        self.message = message
        self.path = path
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        where = f"{path}: " if path else ""
        super().__init__(f"{prefix}{where}{message}")

    def __reduce__(self):
        return self.__class__, (self.message, self.path, self.line)


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Recorded iterates of one run.

    For the Schrodinger-Follmer sampler `points` has K+1 rows starting at the
    origin, `drifts[k]` is the drift estimate used at step k and `noise[k]` is
    the raw Gaussian block of step k (row 0 the step noise, rows 1..m the drift
    draws). For Langevin only the post-burn-in iterates are kept.
    """

    points: np.ndarray
    times: np.ndarray
    drifts: np.ndarray | None = None
    noise: np.ndarray | None = None


@dataclasses.dataclass(frozen=True, eq=False)
class RunResult:
    final_point: np.ndarray
    final_value: float
    best_point: np.ndarray
    best_value: float
    gaussians_consumed: int
    seed_used: int
    run_index: int = 0
    path: Trajectory | None = None

    @property
    def dim(self) -> int:
        return int(self.final_point.shape[-1])


class ResultCodec:
    """
    Fixed text encoding of results: floats with 17 significant digits, fixed
    column order, so identical runs give identical files.
    """

    FLOAT_FORMAT: tp.ClassVar[str] = ".17g"

    @classmethod
    def format_float(cls, value: float) -> str:
        return format(float(value), cls.FLOAT_FORMAT)

    @classmethod
    def header(cls, dim: int) -> tp.List[str]:
        return (
            ["run_index"]
            + [f"x_{i}" for i in range(dim)]
            + ["final_value", "best_value", "gaussians_consumed", "seed"]
        )

    @classmethod
    def row(cls, result: RunResult) -> tp.List[str]:
        return (
            [str(result.run_index)]
            + [cls.format_float(v) for v in result.final_point]
            + [
                cls.format_float(result.final_value),
                cls.format_float(result.best_value),
                str(result.gaussians_consumed),
                str(result.seed_used),
            ]
        )

    @classmethod
    def encode_csv(
        cls,
        header: tp.Sequence[str],
        rows: tp.Iterable[tp.Sequence[str]],
    ) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()

    @classmethod
    def encode_runs(cls, results: tp.Sequence[RunResult]) -> str:
        if not results:
            return cls.encode_csv(cls.header(0), [])
        return cls.encode_csv(cls.header(results[0].dim), map(cls.row, results))

    @classmethod
    def encode_json(cls, content: tp.Any) -> str:
        return json.dumps(content, indent=2, default=cls._default) + "\n"

    @classmethod
    def decode_json(cls, content: str | bytes) -> tp.Any:
        return json.loads(content)

    @staticmethod
    def _default(value: tp.Any) -> tp.Any:
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, np.generic):
            return value.item()
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return dataclasses.asdict(value)
        raise TypeError(f"Object of type {type(value).__name__} is not serializable")


class Sampler(abc.ABC, tp.Generic[CONFIG_TV]):
    name: tp.ClassVar[str] = ""

    def __init__(self, timeout: float | None = None) -> None:
        self.timeout = timeout

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}({self.name})>"

    @abc.abstractmethod
    def run(self, potential: Potential, cfg: CONFIG_TV) -> RunResult:
        pass

    def config_for_run(
        self, cfg: CONFIG_TV, master_seed: int, run_index: int
    ) -> CONFIG_TV:
        return dataclasses.replace(  # type: ignore[type-var]
            cfg, seed=derive_seed(master_seed, run_index)
        )

    def run_one(
        self, potential: Potential, cfg: CONFIG_TV, run_index: int
    ) -> RunResult:
        logger.debug(f"Sampler {self} execute run {run_index}...")
        try:
            result = self.run(potential, cfg)
        except Exception as e:
            raise RunError(f"run {run_index} failed: {e}", run_index) from e
        return dataclasses.replace(result, run_index=run_index)

    def run_batch(
        self,
        potential: Potential,
        cfg: CONFIG_TV,
        n_runs: int,
        master_seed: int,
        workers: int = 1,
    ) -> tp.List[RunResult]:
        """
        Run `n_runs` independent runs; run i is seeded from (master_seed, i), so the
        returned list does not depend on `workers` or on completion order.
        """
        if n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {n_runs}")
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        logger.info(
            f"Run batch: {self} x {n_runs} on {potential} with {workers} worker(s)..."
        )
        configs = [self.config_for_run(cfg, master_seed, i) for i in range(n_runs)]
        if workers == 1:
            return [self.run_one(potential, c, i) for i, c in enumerate(configs)]
        return asyncio.run(self._run_batch(potential, configs, workers))

    async def _run_batch(
        self,
        potential: Potential,
        configs: tp.Sequence[CONFIG_TV],
        workers: int,
    ) -> tp.List[RunResult]:
        loop = asyncio.get_running_loop()
        pool = Pool(name=self.name, concurrency=workers, timeout=self.timeout)

        with ProcessPoolExecutor(max_workers=workers) as executor:

            async def submit(run_index: int) -> RunResult:
                return await loop.run_in_executor(
                    executor, self.run_one, potential, configs[run_index], run_index
                )

            for i in range(len(configs)):
                if await pool.wait_spawn(i, submit(i)) is None:
                    break
            try:
                await pool.wait_done()
                return pool.ordered_results()
            except BaseException:
                pool.force_close()
                raise
