import os
import subprocess

import pytest

# 2024-01-01 is a Monday
DAY0 = 1704067200


def _run(repo, *args, when=None, author="alice"):
    env = dict(os.environ, GIT_AUTHOR_NAME=author, GIT_AUTHOR_EMAIL=f"{author}@example.com",
               GIT_COMMITTER_NAME=author, GIT_COMMITTER_EMAIL=f"{author}@example.com")
    if when is not None:
        env["GIT_AUTHOR_DATE"] = env["GIT_COMMITTER_DATE"] = f"@{when} +0000"
    return subprocess.run(["git", "-C", str(repo), "-c", "commit.gpgsign=false", *args], env=env,
                          check=True, capture_output=True, text=True).stdout


def _write(repo, rel, lines):
    path = repo / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(l + "\n" for l in lines))


def build_fixture_repo(repo):
    """Five first-parent commits, one of them a merge; returns their messages in order."""
    repo.mkdir(parents=True, exist_ok=True)
    _run(repo, "init", "-q", "-b", "main")
    _write(repo, "a/x.java", [f"int a{i};" for i in range(10)])
    _write(repo, "b/y.java", [f"int b{i};" for i in range(10)])
    _run(repo, "add", "-A")
    _run(repo, "commit", "-q", "-m", "Add initial sources", when=DAY0)

    _write(repo, "README.md", ["# demo", "", "text"])
    _run(repo, "add", "-A")
    _run(repo, "commit", "-q", "-m", "Update readme [ci skip]", when=DAY0 + 86400, author="bob")

    _run(repo, "checkout", "-q", "-b", "feature")
    _write(repo, "c/z.rb", ["puts 1", "puts 2"])
    _run(repo, "add", "-A")
    _run(repo, "commit", "-q", "-m", "New ruby helper", when=DAY0 + 2 * 86400, author="carol")
    _run(repo, "checkout", "-q", "main")
    _run(repo, "merge", "-q", "--no-ff", "-m", "Merge branch feature", "feature",
         when=DAY0 + 3 * 86400)

    _write(repo, "a/x.java", [f"  int a{i};" if i < 3 else f"int a{i};" for i in range(10)])
    _run(repo, "add", "-A")
    _run(repo, "commit", "-q", "-m", "Reformat indentation", when=DAY0 + 5 * 86400)

    text = (repo / "b/y.java").read_text()
    (repo / "b/y.java").write_text(text + "// trailing note\n")
    _run(repo, "add", "-A")
    _run(repo, "commit", "-q", "-m", "Clarify comment", when=DAY0 + 6 * 86400, author="bob")
    return ["Add initial sources", "Update readme [ci skip]", "Merge branch feature",
            "Reformat indentation", "Clarify comment"]


@pytest.fixture(scope="session")
def fixture_repo(tmp_path_factory):
    repo = tmp_path_factory.mktemp("fixture") / "demo"
    messages = build_fixture_repo(repo)
    return repo, messages


@pytest.fixture
def git_run():
    return _run
