import os
import sys
from datetime import datetime
from pathlib import Path

from colorama import just_fix_windows_console

just_fix_windows_console()

# ANSI 색상 코드
LOOP_COLORS = {
    "meta_train": "\033[96m",  # 청록색
    "meta_test": "\033[38;5;208m",  # 주황색
    "gradcheck": "\033[93m",  # 노란색
    "worker": "\033[95m",  # 보라색
    "cli": "\033[92m",  # 초록색
}
RESET_COLOR = "\033[0m"


def _color_enabled() -> bool:
    return os.getenv("ADML_LOG_COLOR", "1") != "0"


def make_logger(loop_type: str, index: int = 0):
    """
    루프별로 사용할 logger 함수 생성

    Example:
        logger = make_logger("meta_train", 0)
        logger("episode=1 kind=adml inner_loss=1.6094 wall=0.120s")
    """
    prefix = f"[{loop_type}_{index}]"
    color = LOOP_COLORS.get(loop_type, "") if _color_enabled() else ""
    reset = RESET_COLOR if color else ""

    def log(*args):
        now = datetime.now().strftime("%H:%M:%S")
        print(f"{color}[{now}] {prefix}", *args, reset, flush=True)

    return log


class Tee:
    """stdout 을 터미널과 로그 파일에 동시에 쓴다."""

    def __init__(self, logfile_path, terminal=None):
        self.terminal = terminal or sys.stdout
        self.log = open(logfile_path, "a", encoding="utf-8")

    def write(self, message):
        self.terminal.write(message)
        self.log.write(message)

    def flush(self):
        self.terminal.flush()
        self.log.flush()

    def close(self):
        self.log.close()


def log_path(out_dir, command: str) -> Path:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{command}_{timestamp}.log"
