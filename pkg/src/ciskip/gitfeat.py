"""Commit-level and workflow-level features mined from a local git history.

History is read once with ``git log -p -U0`` along the branch's first-parent
chain, oldest first. Features for commit ``i`` only look at commits
``0..i`` and at CI runs strictly earlier than commit ``i``.
"""
from __future__ import annotations

import csv
import json
import math
import posixpath
import re
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fnmatch import fnmatch
from pathlib import Path

import numpy as np

from .dataset import Dataset, FeatureSchema, Label

COMMIT_FEATURES = (
    "NS", "ENTROPY", "LA", "LD", "Day_week", "CM", "TFC", "CLASSIF",
    "IS_FIX", "IS_DOC", "IS_BUILD", "IS_META", "IS_MERGE", "IS_MEDIA", "IS_SRC", "FRM", "COM",
    "PRS", "PCR", "SC", "NUC", "AGE", "NDEV", "LT", "EXP", "SEXP",
)
# all thirty columns in table order; ND, NF, CRS and REXP are dropped by the
# correlation analysis and only produced on request
ALL_COMMIT_FEATURES = (
    "NS", "ND", "NF", "ENTROPY", "LA", "LD", "Day_week", "CM", "TFC", "CLASSIF",
    "IS_FIX", "IS_DOC", "IS_BUILD", "IS_META", "IS_MERGE", "IS_MEDIA", "IS_SRC", "FRM", "COM",
    "PRS", "CRS", "PCR", "SC", "NUC", "AGE", "NDEV", "LT", "EXP", "SEXP", "REXP",
)
WORKFLOW_FEATURES = ("PBS", "Fail_rate", "avg_exp")

BOOLEAN_FEATURES = {"IS_FIX", "IS_DOC", "IS_BUILD", "IS_META", "IS_MERGE", "IS_MEDIA", "IS_SRC",
                    "FRM", "COM", "PCR", "SC", "PBS"}
CODED_FEATURES = {"Day_week", "CLASSIF"}

SKIP_DIRECTIVE = re.compile(r"\[(ci skip|skip ci)\]", re.IGNORECASE)

# CLASSIF codes; checked in this order, first hit wins, no hit -> 7 (None)
CLASSIF_RULES = (
    (2, ("fix", "bug", "error", "fail")),
    (1, ("add", "new", "implement", "feature")),
    (4, ("improv", "enhanc", "refactor", "clean")),
    (5, ("test", "junit", "spec", "coverage")),
    (6, ("doc", "readme", "license", "typo", "comment")),
)
CLASSIF_NONE = 7

DEFAULT_CATEGORIES = {
    "build": {
        "paths": [".github/workflows/*", ".circleci/*", "ci/*"],
        "filenames": ["Makefile", "makefile", "pom.xml", "build.gradle", "settings.gradle",
                      "gradlew", "gradlew.bat", "CMakeLists.txt", "Gemfile", "Gemfile.lock",
                      "Rakefile", ".travis.yml", "appveyor.yml", "build.xml", "Dockerfile",
                      "package.json", "setup.py", "pyproject.toml"],
        "extensions": ["gradle", "gemspec", "mk", "cmake"],
    },
    "doc": {
        "paths": ["doc/*", "docs/*"],
        "filenames": ["README", "LICENSE", "CHANGELOG", "AUTHORS", "CONTRIBUTING", "NOTICE"],
        "extensions": ["md", "txt", "rst", "adoc", "docx", "pdf", "rdoc", "textile"],
    },
    "meta": {
        "paths": [],
        "filenames": [".gitignore", ".gitattributes", ".editorconfig", ".mailmap", ".rspec",
                      ".rubocop.yml", ".ruby-version", ".codeclimate.yml", "CODEOWNERS"],
        "extensions": [],
    },
    "media": {
        "paths": [],
        "filenames": [],
        "extensions": ["png", "jpg", "jpeg", "gif", "svg", "ico", "bmp", "mp3", "mp4", "wav",
                       "avi", "mov", "ogg", "webm"],
    },
    "src": {
        "paths": [],
        "filenames": [],
        "extensions": ["java", "rb", "py", "js", "ts", "c", "cc", "cpp", "h", "hpp", "go", "rs",
                       "kt", "scala", "php", "cs", "swift", "groovy", "erb"],
    },
}

DEFAULT_COMMENT_PREFIXES = {
    **{ext: ["//", "/*", "*", "*/"] for ext in
       ("java", "js", "ts", "c", "cc", "cpp", "h", "hpp", "go", "rs", "kt", "scala", "php", "cs",
        "swift", "groovy")},
    "rb": ["#", "=begin", "=end"],
    "py": ["#"],
}


class GitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FileChange:
    path: str
    lines_added: int
    lines_deleted: int
    size_before: int
    added_text: tuple[str, ...] = ()
    removed_text: tuple[str, ...] = ()


@dataclass(frozen=True)
class CommitRecord:
    hash: str
    author: str
    timestamp: int
    parents: tuple[str, ...]
    message: str
    file_changes: tuple[FileChange, ...] = ()


@dataclass(frozen=True)
class WorkflowRecord:
    commit_hash: str
    build_result: str
    committer: str
    timestamp: int

    def __post_init__(self):
        if self.build_result not in ("pass", "fail", "skipped"):
            raise ValueError(f"unknown build result {self.build_result!r}")


# -- git access ------------------------------------------------------------

_RECORD = "\x1e"
_FIELD = "\x1f"
_HUNK = re.compile(r"^@@ -\d+(?:,\d+)? \+\d+(?:,\d+)? @@")


def _git(repo, *args) -> str:
    try:
        proc = subprocess.run(["git", "-C", str(repo), "-c", "core.quotepath=off", *args],
                              capture_output=True, check=False)
    except FileNotFoundError:
        raise GitError("git executable not found") from None
    if proc.returncode != 0:
        raise GitError(proc.stderr.decode("utf-8", "replace").strip() or f"git {args[0]} failed")
    return proc.stdout.decode("utf-8", "replace")


def _strip_prefix(p: str) -> str | None:
    p = p.rstrip("\t")
    if p == "/dev/null":
        return None
    if p.startswith('"') and p.endswith('"'):
        p = p[1:-1]
    return p[2:] if p[:2] in ("a/", "b/") else p


def _parse_patch(text: str):
    """Per-file added/removed lines from a ``-U0`` patch."""
    files = []
    cur = None
    in_header = False
    for line in text.split("\n"):
        if line.startswith("diff --git "):
            m = re.match(r"diff --git (\"?a/.*?\"?) (\"?b/.*\"?)$", line)
            path = _strip_prefix(m.group(2)) if m else line.split(" b/", 1)[-1]
            cur = {"path": path, "added": [], "removed": []}
            files.append(cur)
            in_header = True
        elif cur is None:
            continue
        elif in_header and line.startswith("+++ "):
            p = _strip_prefix(line[4:])
            if p is not None:
                cur["path"] = p
        elif in_header and line.startswith("--- "):
            p = _strip_prefix(line[4:])
            if p is not None:
                cur["path"] = p
        elif _HUNK.match(line):
            in_header = False
        elif not in_header:
            if line.startswith("+"):
                cur["added"].append(line[1:])
            elif line.startswith("-"):
                cur["removed"].append(line[1:])
    return files


def extract_commits(repo_path, branch: str = "HEAD") -> list[CommitRecord]:
    """First-parent history of ``branch``, oldest commit first."""
    repo = Path(repo_path)
    if not repo.is_dir():
        raise GitError(f"{repo}: not a directory")
    try:
        _git(repo, "rev-parse", "--git-dir")
    except GitError:
        raise GitError(f"{repo}: not a git repository") from None
    try:
        _git(repo, "rev-parse", "--verify", "--quiet", f"{branch}^{{commit}}")
    except GitError:
        raise GitError(f"{repo}: unknown branch or no commits: {branch!r}") from None
    fmt = f"{_RECORD}%H{_FIELD}%an{_FIELD}%at{_FIELD}%P{_FIELD}%B{_FIELD}"
    out = _git(repo, "log", "--first-parent", "--reverse", "--diff-merges=first-parent",
               "--no-renames", "--no-color", "-p", "-U0", f"--format={fmt}", branch, "--")
    records = []
    sizes: dict[str, int] = {}
    for chunk in out.split(_RECORD)[1:]:
        h, author, ts, parents, message, patch = chunk.split(_FIELD, 5)
        changes = []
        for f in _parse_patch(patch):
            before = sizes.get(f["path"], 0)
            added, removed = len(f["added"]), len(f["removed"])
            sizes[f["path"]] = max(before + added - removed, 0)
            changes.append(FileChange(f["path"], added, removed, before,
                                      tuple(f["added"]), tuple(f["removed"])))
        records.append(CommitRecord(h, author, int(ts), tuple(parents.split()),
                                    message.strip("\n"), tuple(changes)))
    return records


def load_runs(path) -> list[WorkflowRecord]:
    """Read a CI run log: ``commit_hash,build_result,committer,timestamp``."""
    runs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"commit_hash", "build_result", "committer", "timestamp"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: run log lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                runs.append(WorkflowRecord(row["commit_hash"].strip(), row["build_result"].strip(),
                                           row["committer"].strip(), int(float(row["timestamp"]))))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return sorted(runs, key=lambda r: r.timestamp)


# -- message and path rules -----------------------------------------------

def label_skip(message: str) -> Label:
    return Label.SKIP if SKIP_DIRECTIVE.search(message or "") else Label.BUILD


def classify_message(message: str) -> int:
    text = (message or "").lower()
    for code, stems in CLASSIF_RULES:
        if any(re.search(r"\b" + re.escape(stem), text) for stem in stems):
            return code
    return CLASSIF_NONE


_TOKEN = re.compile(r"[a-z][a-z0-9_]+")


def tokenize(message: str) -> list[str]:
    return _TOKEN.findall((message or "").lower())


class TermWeights:
    """Smoothed IDF fitted on training messages; scores a message by its mean TF-IDF."""

    def __init__(self):
        self.idf: dict[str, float] | None = None
        self.n_docs = 0

    def fit(self, messages) -> "TermWeights":
        df = Counter()
        n = 0
        for msg in messages:
            df.update(set(tokenize(msg)))
            n += 1
        self.n_docs = n
        self.idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
        return self

    def score(self, message: str) -> float:
        if self.idf is None:
            raise ValueError("TermWeights used before fit()")
        tokens = tokenize(message)
        if not tokens:
            return 0.0
        counts = Counter(tokens)
        unseen = math.log(1 + self.n_docs) + 1.0
        weights = [c / len(tokens) * self.idf.get(t, unseen) for t, c in counts.items()]
        return float(np.mean(weights))


@dataclass
class Categories:
    rules: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_CATEGORIES)))
    comment_prefixes: dict = field(default_factory=lambda: dict(DEFAULT_COMMENT_PREFIXES))

    @classmethod
    def load(cls, path) -> "Categories":
        data = json.loads(Path(path).read_text())
        base = cls()
        for name, rule in data.get("categories", {}).items():
            base.rules[name] = {"paths": rule.get("paths", []), "filenames": rule.get("filenames", []),
                                "extensions": rule.get("extensions", [])}
        base.comment_prefixes.update(data.get("comment_prefixes", {}))
        return base

    def category(self, path: str) -> str | None:
        name = posixpath.basename(path)
        ext = _extension(path)
        stem = name.split(".")[0]
        for cat, rule in self.rules.items():
            if any(fnmatch(path, pat) for pat in rule["paths"]):
                return cat
        for cat, rule in self.rules.items():
            if name in rule["filenames"] or (stem and stem in rule["filenames"]):
                return cat
        for cat, rule in self.rules.items():
            if ext and ext in rule["extensions"]:
                return cat
        return None


def _extension(path: str) -> str:
    name = posixpath.basename(path)
    if "." not in name.lstrip("."):
        return ""
    return name.rsplit(".", 1)[1].lower()


def _top_dir(path: str) -> str:
    return path.split("/", 1)[0] if "/" in path else "."


def _changed_lines(changes):
    added = [l for fc in changes for l in fc.added_text]
    removed = [l for fc in changes for l in fc.removed_text]
    return added, removed


def is_formatting(changes) -> bool:
    """Every changed line differs from a counterpart only in whitespace."""
    added, removed = _changed_lines(changes)
    if not added and not removed:
        return False
    squash = lambda lines: sorted(s for s in ("".join(l.split()) for l in lines) if s)
    return squash(added) == squash(removed)


def is_comment_only(changes, categories: Categories) -> bool:
    if not changes:
        return False
    seen = False
    for fc in changes:
        prefixes = categories.comment_prefixes.get(_extension(fc.path))
        if not prefixes:
            return False
        for line in fc.added_text + fc.removed_text:
            s = line.strip()
            if not s:
                continue
            if not any(s.startswith(p) for p in prefixes):
                return False
            seen = True
    return seen


# -- feature computation ---------------------------------------------------

class _History:
    """Running per-file / per-author state while walking commits in order."""

    def __init__(self, idf_model: TermWeights, categories: Categories):
        self.idf = idf_model
        self.categories = categories
        self.labels: list[int] = []
        self.authors: list[str] = []
        self.commit_files: list[frozenset] = []
        self.file_commits = defaultdict(list)
        self.file_last_ts: dict[str, int] = {}
        self.file_authors = defaultdict(set)
        self.author_commits = defaultdict(list)  # author -> [(timestamp, top dirs)]

    def features(self, c: CommitRecord) -> dict[str, float]:
        changes = c.file_changes
        paths = [fc.path for fc in changes]
        dirs = {_top_dir(p) for p in paths}
        churn = np.array([fc.lines_added + fc.lines_deleted for fc in changes], dtype=np.float64)
        total = churn.sum()
        if total > 0:
            p = churn[churn > 0] / total
            entropy = float(-(p * np.log2(p)).sum())
        else:
            entropy = 0.0
        cats = [self.categories.category(p) for p in paths]
        only = lambda cat: float(bool(cats) and all(x == cat for x in cats))
        classif = classify_message(c.message)

        prev = self.labels[-5:]
        prev_authors = self.authors[-5:]
        related = set()
        for p in paths:
            for j in self.file_commits.get(p, ()):
                related |= self.commit_files[j]
        ages = [(c.timestamp - self.file_last_ts[p]) / 86400.0 if p in self.file_last_ts else 0.0
                for p in paths]
        devs = set()
        for p in paths:
            devs |= self.file_authors.get(p, set())
        mine = self.author_commits.get(c.author, [])
        rexp = sum(1.0 / (1.0 + max(c.timestamp - ts, 0) / (365.0 * 86400.0)) for ts, _ in mine)
        return {
            "NS": float(len(dirs)),
            "ND": float(len({posixpath.dirname(p) for p in paths})),
            "NF": float(len(paths)),
            "ENTROPY": entropy,
            "LA": float(sum(fc.lines_added for fc in changes)),
            "LD": float(sum(fc.lines_deleted for fc in changes)),
            "Day_week": float(datetime.fromtimestamp(c.timestamp, timezone.utc).weekday()),
            "CM": self.idf.score(c.message),
            "TFC": float(len({_extension(p) for p in paths})),
            "CLASSIF": float(classif),
            "IS_FIX": float(classif == 2),
            "IS_DOC": only("doc"),
            "IS_BUILD": only("build"),
            "IS_META": only("meta"),
            "IS_MERGE": float(len(c.parents) >= 2),
            "IS_MEDIA": only("media"),
            "IS_SRC": only("src"),
            "FRM": float(is_formatting(changes)),
            "COM": float(is_comment_only(changes, self.categories)),
            "PRS": float(sum(prev)),
            "CRS": float(sum(l for l, a in zip(prev, prev_authors) if a == c.author)),
            "PCR": float(bool(prev) and prev[-1] == 1),
            "SC": float(bool(self.authors) and self.authors[-1] == c.author),
            "NUC": float(len(related)),
            "AGE": float(np.mean([max(a, 0.0) for a in ages])) if ages else 0.0,
            "NDEV": float(len(devs)),
            "LT": float(sum(fc.size_before for fc in changes)),
            "EXP": float(len(mine)),
            "REXP": rexp,
            "SEXP": float(sum(1 for _, d in mine if d & dirs)),
        }

    def advance(self, c: CommitRecord):
        paths = frozenset(fc.path for fc in c.file_changes)
        idx = len(self.labels)
        self.labels.append(int(label_skip(c.message)))
        self.authors.append(c.author)
        self.commit_files.append(paths)
        for p in paths:
            self.file_commits[p].append(idx)
            self.file_last_ts[p] = c.timestamp
            self.file_authors[p].add(c.author)
        self.author_commits[c.author].append((c.timestamp, frozenset(_top_dir(p) for p in paths)))


def feature_names(full: bool = False) -> list[str]:
    return list(ALL_COMMIT_FEATURES if full else COMMIT_FEATURES)


def iter_commit_features(history, idf_model: TermWeights, categories: Categories | None = None):
    """Yield the feature dict of every commit, in order, in one pass."""
    if idf_model is None or idf_model.idf is None:
        raise ValueError("idf_model must be fitted before extracting features")
    state = _History(idf_model, categories or Categories())
    for c in history:
        yield state.features(c)
        state.advance(c)


def commit_features(history, index: int, idf_model: TermWeights,
                    categories: Categories | None = None, full: bool = False) -> np.ndarray:
    if not 0 <= index < len(history):
        raise IndexError(f"commit index {index} outside history of {len(history)}")
    feats = None
    for feats in iter_commit_features(history[:index + 1], idf_model, categories):
        pass
    return np.array([feats[n] for n in feature_names(full)], dtype=np.float64)


def _iter_workflow_features(history, runs):
    runs = sorted(runs, key=lambda r: r.timestamp)
    done = [r for r in runs if r.build_result != "skipped"]
    j = 0
    last_result = None
    builds = Counter()
    fails = Counter()
    for c in history:
        while j < len(done) and done[j].timestamp < c.timestamp:
            r = done[j]
            last_result = r.build_result
            builds[r.committer] += 1
            fails[r.committer] += r.build_result == "fail"
            j += 1
        pbs = 0.0 if last_result == "fail" else 1.0
        n_mine = builds.get(c.author, 0)
        fail_rate = fails[c.author] / n_mine if n_mine else 0.0
        avg_exp = float(np.mean(list(builds.values()))) if builds else 0.0
        yield pbs, fail_rate, avg_exp


def workflow_features(history, runs, index: int) -> tuple[float, float, float]:
    """(PBS, fail rate, avg_exp) from CI runs finished before commit ``index``.

    PBS is 1 when there is no earlier build. Skipped runs are not builds.
    """
    if not 0 <= index < len(history):
        raise IndexError(f"commit index {index} outside history of {len(history)}")
    out = None
    for out in _iter_workflow_features(history[:index + 1], runs):
        pass
    return out


def build_dataset(repo_path, branch: str = "HEAD", runs=None, include_workflow: bool = False,
                  idf_fit_fraction: float = 0.8, categories: Categories | None = None,
                  full: bool = False) -> Dataset:
    """One row per first-parent commit, labeled by its skip directive.

    The IDF model behind CM is fitted on the oldest ``idf_fit_fraction`` of
    the history only.
    """
    if include_workflow and runs is None:
        raise ValueError("include_workflow requires a CI run log")
    history = extract_commits(repo_path, branch)
    if not history:
        raise GitError(f"{repo_path}: no commits on {branch!r}")
    n_fit = max(1, int(math.ceil(len(history) * idf_fit_fraction)))
    idf = TermWeights().fit(c.message for c in history[:n_fit])
    names = feature_names(full)
    rows = [[f[n] for n in names] for f in iter_commit_features(history, idf, categories)]
    if include_workflow:
        for row, wf in zip(rows, _iter_workflow_features(history, runs)):
            row.extend(wf)
        names = names + list(WORKFLOW_FEATURES)
    X = np.array(rows, dtype=np.float64)
    y = np.array([int(label_skip(c.message)) for c in history], dtype=np.int8)
    kinds = {n: "boolean" for n in BOOLEAN_FEATURES}
    kinds.update({n: "categorical-coded" for n in CODED_FEATURES})
    schema = FeatureSchema.infer(names, X, kinds)
    return Dataset(schema, X, y, Path(repo_path).resolve().name)

