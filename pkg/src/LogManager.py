"""
Log Manager for capturing and storing laboratory run logs.
Keeps a bounded in-memory buffer, echoes to the console and appends to application.log.
"""

import os
import subprocess
import threading
from datetime import datetime
from typing import Dict, List, Optional

from dotenv import load_dotenv

OUTPUT_ROOT_ENV = "QUBIT_LAB_OUTPUT_ROOT"
LEVELS = ("INFO", "WARNING", "ERROR")


class LogManager:
    """
    Manages run logs with a circular buffer, console echo and a log file.
    """

    def __init__(self, max_logs: int = 1000, log_dir: Optional[str] = None, echo: bool = True):
        """
        Initialize the log manager.

        Args:
            max_logs (int): Maximum number of logs to keep in memory
            log_dir (str): Directory holding application.log; defaults to the output root
            echo (bool): Print every entry to the console
        """
        self.logs = []
        self.max_logs = max_logs
        self.log_id = 0
        self.echo = echo
        self.log_lock = threading.Lock()

        load_dotenv()
        self.log_dir = log_dir or os.environ.get(OUTPUT_ROOT_ENV, os.path.join(os.getcwd(), "outputs"))
        self.log_file = os.path.join(self.log_dir, "application.log")

        try:
            os.makedirs(self.log_dir, exist_ok=True)
            with open(self.log_file, 'a') as f:
                f.write(f"\n=== Log Started at {datetime.now().strftime('%Y-%m-%d %H:%M:%S')} ===\n")
        except OSError as e:
            print(f"Error creating log file: {str(e)}")
            self.log_file = None

        self._log_git_info()

    def _log_git_info(self):
        """Log git version of the working tree."""
        try:
            git_hash = subprocess.check_output(['git', 'rev-parse', '--short', 'HEAD'],
                                               stderr=subprocess.DEVNULL).decode().strip()
            git_branch = subprocess.check_output(['git', 'rev-parse', '--abbrev-ref', 'HEAD'],
                                                 stderr=subprocess.DEVNULL).decode().strip()
            self.log(f"=== Application Started === Version: {git_hash} on {git_branch}")
        except (subprocess.CalledProcessError, OSError):
            self.log("=== Application Started === (Git information unavailable)")

    def _write_to_file(self, timestamp: str, level: str, message: str):
        """Write log entry to file."""
        if not self.log_file:
            return
        try:
            with open(self.log_file, 'a') as f:
                f.write(f"[{timestamp}] {level} {message}\n")
        except OSError as e:
            print(f"Error writing to log file: {str(e)}")

    def log(self, message: str, level: str = "INFO"):
        """
        Add a log entry with timestamp.

        Args:
            message (str): The log message
            level (str): One of INFO, WARNING, ERROR
        """
        if level not in LEVELS:
            raise ValueError(f"Unsupported log level: {level}")
        timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S.%f')[:-3]
        with self.log_lock:
            log_entry = {
                'id': self.log_id,
                'timestamp': timestamp,
                'level': level,
                'message': message
            }
            self.logs.append(log_entry)
            if len(self.logs) > self.max_logs:
                self.logs.pop(0)
            self.log_id += 1
            if self.echo:
                print(f"[{timestamp}] {level} {message}")
            self._write_to_file(timestamp, level, message)

    def warning(self, message: str):
        self.log(message, level="WARNING")

    def error(self, message: str):
        self.log(f"Error: {message}", level="ERROR")

    def get_logs(self, after_id: int = -1, level: Optional[str] = None) -> List[Dict]:
        """
        Get logs after the specified ID.

        Args:
            after_id (int): Return logs after this ID
            level (str): Only return entries of this level

        Returns:
            List[Dict]: List of log entries
        """
        with self.log_lock:
            if after_id == -1:
                entries = self.logs[-100:]
            else:
                entries = [entry for entry in self.logs if entry['id'] > after_id]
        if level is not None:
            entries = [entry for entry in entries if entry['level'] == level]
        return entries


_shared_log_manager: Optional[LogManager] = None
_shared_lock = threading.Lock()


def get_log_manager() -> LogManager:
    """Return the process-wide log manager, creating it on first use."""
    global _shared_log_manager
    with _shared_lock:
        if _shared_log_manager is None:
            _shared_log_manager = LogManager()
        return _shared_log_manager


def set_log_manager(log_manager: Optional[LogManager]) -> None:
    """Replace the process-wide log manager (None resets it)."""
    global _shared_log_manager
    with _shared_lock:
        _shared_log_manager = log_manager
