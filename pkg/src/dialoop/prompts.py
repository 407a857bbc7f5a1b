"""Versioned store for the in-context judge prompt.

Versions are immutable text files with a JSON index; history is linear and
append-only. Every verdict records the version that judged it, so a prompt
revision never rewrites the past.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .templates import DEFAULT_JUDGE_PROMPT_V0, append_judge_criteria


@dataclass(frozen=True)
class PromptVersion:
    version_id: str
    body: str
    changelog: str


class PromptStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._index_path = self.root / "index.json"
        if not self._index_path.exists():
            raise FileNotFoundError(f"no prompt store at {self.root}")

    @classmethod
    def create(
        cls,
        root: str | Path,
        initial_body: str = DEFAULT_JUDGE_PROMPT_V0,
        changelog: str = "initial judge prompt",
    ) -> "PromptStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        index_path = root / "index.json"
        if index_path.exists():
            return cls(root)
        (root / "v0.txt").write_text(initial_body, encoding="utf-8")
        index = {"versions": [{"id": "v0", "file": "v0.txt", "changelog": changelog}]}
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
        return cls(root)

    def _index(self) -> dict:
        return json.loads(self._index_path.read_text(encoding="utf-8"))

    def history(self) -> list[PromptVersion]:
        return [
            PromptVersion(
                version_id=e["id"],
                body=(self.root / e["file"]).read_text(encoding="utf-8"),
                changelog=e["changelog"],
            )
            for e in self._index()["versions"]
        ]

    def versions(self) -> list[str]:
        return [e["id"] for e in self._index()["versions"]]

    def latest(self) -> str:
        return self._index()["versions"][-1]["id"]

    def body(self, version_id: str) -> str:
        for e in self._index()["versions"]:
            if e["id"] == version_id:
                return (self.root / e["file"]).read_text(encoding="utf-8")
        raise KeyError(f"unknown prompt version {version_id!r}")

    def append(self, body: str, changelog: str) -> str:
        """Write the next version; existing files are never touched."""
        index = self._index()
        version_id = f"v{len(index['versions'])}"
        filename = f"{version_id}.txt"
        target = self.root / filename
        if target.exists():
            raise FileExistsError(f"{target} already exists; store is append-only")
        target.write_text(body, encoding="utf-8")
        index["versions"].append({"id": version_id, "file": filename, "changelog": changelog})
        self._index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
        return version_id

    def append_criteria(self, criteria: list[str], changelog: str) -> str:
        """New version extending the latest body's criteria block."""
        new_body = append_judge_criteria(self.body(self.latest()), criteria)
        return self.append(new_body, changelog)
