"""
Run-directory filesystem for the lab
Used for dependency injection - the logger and the output writers only see this object
"""

import json
from pathlib import Path


class RunFileSystem:
    """One run directory on local disk"""

    def __init__(self, base_path):
        self.base_path = Path(base_path)
        self.base_path.mkdir(parents=True, exist_ok=True)

    def path(self, filename):
        return self.base_path / filename

    def subdirectory(self, name):
        """Filesystem rooted at a child directory (sweep members, snapshots)"""
        return RunFileSystem(self.base_path / name)

    def is_available(self):
        return self.base_path.is_dir()

    def append_text(self, filename, content):
        """Append one line of text (for logging)"""
        try:
            with open(self.base_path / filename, "a") as f:
                f.write(content + "\n")
            return True
        except OSError:
            return False

    def write_text(self, filename, content):
        try:
            (self.base_path / filename).write_text(content)
            return True
        except OSError:
            return False

    def write_json(self, filename, data):
        try:
            with open(self.base_path / filename, "w") as f:
                json.dump(data, f, indent=2)
                f.write("\n")
            return True
        except (OSError, TypeError):
            return False

    def read_json(self, filename):
        try:
            with open(self.base_path / filename, "r") as f:
                return json.load(f)
        except (OSError, ValueError):
            return None

    def write_bytes(self, filename, data):
        try:
            (self.base_path / filename).write_bytes(data)
            return True
        except OSError:
            return False

    def count_lines(self, filename):
        try:
            file_path = self.base_path / filename
            if not file_path.exists():
                return 0
            with open(file_path, "r") as f:
                return sum(1 for _ in f)
        except OSError:
            return 0

    def truncate_file(self, filename, keep_lines):
        """Keep only the last N lines of a text file"""
        try:
            file_path = self.base_path / filename
            if not file_path.exists():
                return False

            lines = file_path.read_text().splitlines()
            if len(lines) <= keep_lines:
                return True

            file_path.write_text("\n".join(lines[-keep_lines:]) + "\n")
            return True
        except OSError:
            return False
