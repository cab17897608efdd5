import os
from pathlib import Path

import numpy as np
import pytest

STUDENT_COLUMNS = [
    "school", "sex", "age", "address", "famsize", "Pstatus", "Medu", "Fedu", "Mjob", "Fjob",
    "reason", "guardian", "traveltime", "studytime", "failures", "schoolsup", "famsup", "paid",
    "activities", "nursery", "higher", "internet", "romantic", "famrel", "freetime", "goout",
    "Dalc", "Walc", "health", "absences", "G1", "G2", "G3",
]
JOBS = ["at_home", "health", "other", "services", "teacher"]


def synthetic_student_csv(n: int = 120, seed: int = 0, quoted: bool = True) -> str:
    """Semicolon-delimited CSV with the student-performance header.

    Two latent groups differ in several binary attributes and in grade level,
    so K-means on the encoded features recovers them.
    """
    rng = np.random.default_rng(seed)
    q = (lambda s: f'"{s}"') if quoted else (lambda s: s)
    lines = [";".join(STUDENT_COLUMNS)]
    for i in range(n):
        g = 0 if i < int(n * 0.65) else 1
        yes = lambda p: "yes" if rng.random() < p else "no"  # noqa: E731
        school = "GP" if (rng.random() < (0.9 if g == 0 else 0.1)) else "MS"
        address = "U" if rng.random() < (0.85 if g == 0 else 0.2) else "R"
        studytime = int(rng.integers(1, 5))
        failures = int(rng.integers(0, 2)) if g == 0 else int(rng.integers(1, 4))
        g1 = float(np.clip(rng.normal(12 if g == 0 else 8, 2.5), 0, 20))
        g2 = float(np.clip(g1 + rng.normal(0, 1.5), 0, 20))
        g3 = int(round(np.clip(0.2 * g1 + 0.7 * g2 + 0.4 * studytime - 0.8 * failures
                               + rng.normal(0, 1.0), 0, 20)))
        row = [
            q(school), q("F" if rng.random() < 0.5 else "M"), str(int(rng.integers(15, 22))),
            q(address), q("GT3" if rng.random() < 0.7 else "LE3"),
            q("T" if rng.random() < 0.9 else "A"),
            str(int(rng.integers(0, 5))), str(int(rng.integers(0, 5))),
            q(JOBS[int(rng.integers(5))]), q(JOBS[int(rng.integers(5))]),
            q(["course", "home", "other", "reputation"][int(rng.integers(4))]),
            q(["father", "mother", "other"][int(rng.integers(3))]),
            str(int(rng.integers(1, 5))), str(studytime), str(failures),
            q(yes(0.1 if g == 0 else 0.8)), q(yes(0.6)), q(yes(0.7 if g == 0 else 0.1)),
            q(yes(0.5)), q(yes(0.8)), q(yes(0.95 if g == 0 else 0.5)),
            q(yes(0.9 if g == 0 else 0.3)), q(yes(0.3)),
            str(int(rng.integers(1, 6))), str(int(rng.integers(1, 6))),
            str(int(rng.integers(1, 6))), str(int(rng.integers(1, 6))),
            str(int(rng.integers(1, 6))), str(int(rng.integers(1, 6))),
            str(int(rng.integers(0, 10 if g == 0 else 30))),
            str(int(round(g1))), str(int(round(g2))), str(g3),
        ]
        lines.append(";".join(row))
    return "\n".join(lines) + "\n"


@pytest.fixture
def student_csv(tmp_path) -> Path:
    path = tmp_path / "student-syn.csv"
    path.write_text(synthetic_student_csv(120, seed=3))
    return path


def find_real_dataset(name: str) -> Path | None:
    """Locate a public student CSV (``student-mat.csv`` / ``student-por.csv``).

    Searched in ``$STUDENT_DATA_DIR`` and then ``data/`` at the repo root.
    """
    candidates = []
    if os.environ.get("STUDENT_DATA_DIR"):
        candidates.append(Path(os.environ["STUDENT_DATA_DIR"]) / name)
    candidates.append(Path(__file__).resolve().parents[1] / "data" / name)
    for c in candidates:
        if c.is_file():
            return c
    return None


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
