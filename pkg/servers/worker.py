# servers/worker.py

import os
from collections.abc import Callable, Sequence
from multiprocessing import Pool

from dotenv import load_dotenv

from servers.logger_utils import make_logger


def worker_count(requested: int | None = None) -> int:
    """요청값이 없으면 ADML_THREADS (기본 1). 항상 1 이상."""
    if requested is None:
        load_dotenv()
        requested = int(os.getenv("ADML_THREADS", 1))
    return max(1, int(requested))


def run_ordered(fn: Callable, jobs: Sequence, num_workers: int | None = None) -> list:
    """
    jobs 각각에 fn 을 적용하고 결과를 jobs 순서대로 돌려준다.
    fn 과 job 은 pickle 가능해야 한다 (fn 은 모듈 최상위 함수).
    """
    jobs = list(jobs)
    workers = min(worker_count(num_workers), len(jobs)) if jobs else 1
    if workers <= 1:
        return [fn(job) for job in jobs]

    log = make_logger("worker", 0)
    log(f"pool 시작 workers={workers} jobs={len(jobs)}")
    with Pool(processes=workers) as pool:
        # map 은 입력 순서를 보존한다
        return pool.map(fn, jobs, chunksize=max(1, len(jobs) // (workers * 4)))
