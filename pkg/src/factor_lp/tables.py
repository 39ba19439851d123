import math
import time
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import settings
from helpers import InvariantError
from .continuous import solve_lp_spm_H
from .kernels import baseline_multi, baseline_spm
from .programs import build_lp_esp, build_lp_esp_n, build_lp_spm_n
from .simplex import OPTIMAL, solve_lp


logger = logging.getLogger(__name__)

GOLDEN_DIR = Path(__file__).parent / "goldens"
GOLDEN_FILES = {
    "small-n": "small_n.csv",
    "multiunit": "multiunit.csv",
    "spm-n": "spm_n.csv",
    "esp-k": "esp_k.csv",
    "esp-n": "esp_n.csv",
}
TABLES = tuple(GOLDEN_FILES)
KEYS = ["table", "setting", "parameter", "k"]
COLUMNS = KEYS + ["bound", "method", "runtime"]

# table -> (row labels, column labels) of the markdown layout
LAYOUTS = {
    "small-n": ("setting", "parameter"),
    "multiunit": ("setting", "parameter"),
    "spm-n": ("parameter", "k"),
    "esp-k": ("setting", "k"),
    "esp-n": ("parameter", "k"),
}


class Cell(NamedTuple):
    table: str
    setting: str
    parameter: float
    k: int


@dataclass
class TableConfig:
    """
    Selection of bound tables to regenerate.

    ``ks`` overrides every table's discretization grid; left empty, each table
    uses its desk-scale default and ``slow`` appends k = 1600.
    """
    which: Tuple[str, ...] = TABLES
    ns: Tuple[int, ...] = tuple(range(1, 11))
    Hs: Tuple[int, ...] = tuple(range(1, 11))
    ks: Tuple[int, ...] = ()
    tolerance: float = 1e-4
    slow: bool = False
    jobs: int = field(default_factory=lambda: settings.JOBS)

    def __post_init__(self):
        unknown = set(self.which) - set(TABLES)
        if unknown:
            raise ValueError(f"unknown tables {sorted(unknown)}; choose from {list(TABLES)}")

    def k_grid(self, table: str) -> Tuple[int, ...]:
        if self.ks:
            return tuple(self.ks)
        defaults = {"small-n": (200, 400), "spm-n": (200, 400), "esp-k": (50, 100, 200, 400), "esp-n": (200, 400)}
        grid = defaults.get(table, (0,))
        if self.slow and table != "multiunit":
            grid = grid + (1600,)
        return grid

    def cells(self) -> List[Cell]:
        cells: List[Cell] = []
        for table in self.which:
            if table == "multiunit":
                for H in self.Hs:
                    cells += [Cell(table, "baseline", float(H), 0), Cell(table, "spm-H", float(H), 0)]
            elif table == "small-n":
                for n in self.ns:
                    cells.append(Cell(table, "baseline", float(n), 0))
                    for k in self.k_grid(table):
                        cells += [Cell(table, "spm", float(n), k), Cell(table, "esp", float(n), k)]
            elif table == "esp-k":
                cells += [Cell(table, "esp", math.inf, k) for k in self.k_grid(table)]
            else:
                cells += [Cell(table, table, float(n), k) for n in self.ns for k in self.k_grid(table)]
        return cells


def _lp_reciprocal(lp) -> float:
    solution = solve_lp(lp)
    if solution.status != OPTIMAL:
        raise InvariantError(f"{lp.name}: solver finished with status {solution.status}")
    return solution.reciprocal


def solve_cell(cell: Cell) -> Dict:
    start = time.perf_counter()
    n = cell.parameter
    if cell.setting == "baseline":
        value = baseline_spm(int(n)) if cell.table == "small-n" else baseline_multi(int(n))
        method = "closed-form"
    elif cell.setting == "spm-H":
        value, method = solve_lp_spm_H(int(n)).factor, "quadrature"
    elif cell.setting in ("spm", "spm-n"):
        value, method = _lp_reciprocal(build_lp_spm_n(int(n), cell.k)), "simplex"
    elif cell.table == "esp-k":
        value, method = _lp_reciprocal(build_lp_esp(cell.k)), "simplex"
    else:
        value, method = _lp_reciprocal(build_lp_esp_n(int(n), cell.k)), "simplex"
    row = dict(cell._asdict(), bound=value, method=method, runtime=time.perf_counter() - start)
    logger.info(f"{cell.table}/{cell.setting} parameter={n} k={cell.k}: {value:.6f}")
    return row


def load_goldens(tables: Sequence[str] = TABLES) -> pd.DataFrame:
    frames = [pd.read_csv(GOLDEN_DIR / GOLDEN_FILES[t], comment="#") for t in tables]
    golden = pd.concat(frames, ignore_index=True)
    golden["parameter"] = golden["parameter"].astype(float)
    golden["k"] = golden["k"].astype(int)
    return golden


def reference_values(tables: Sequence[str] = TABLES) -> pd.DataFrame:
    """
    Checked-in reference values keyed like the computed cells. The small-n LP
    cells are the finite-n programs, so they are also looked up in those files
    at whatever k they were solved.
    """
    golden = load_goldens(tables)
    if "small-n" in tables:
        finite = load_goldens(["spm-n", "esp-n"])
        finite = finite.assign(table="small-n", setting=finite["setting"].map({"spm-n": "spm", "esp-n": "esp"}))
        golden = pd.concat([golden, finite], ignore_index=True).drop_duplicates(subset=KEYS, keep="first")
    return golden


def best_over_k(frame: pd.DataFrame) -> pd.DataFrame:
    """Keeps, per small-n setting and bidder count, the row with the largest bound over the k grid."""
    lp_rows = (frame["table"] == "small-n") & (frame["setting"] != "baseline")
    if not lp_rows.any():
        return frame
    best = frame[lp_rows].groupby(["setting", "parameter"])["bound"].idxmax()
    return frame[~lp_rows | frame.index.isin(best)].reset_index(drop=True)


def esp_headline_factor() -> float:
    """The single-unit eager second-price factor at the finest published discretization."""
    golden = load_goldens(["esp-k"])
    return float(golden.sort_values("k")["bound"].iloc[-1])


class BoundTable:
    """
    Computed approximation factors, one row per (table, setting, parameter, k)
    cell, with the method used and its runtime in seconds.

    Methods
    -------
    to_csv(path), to_markdown():
        Export; markdown is laid out as the published tables are.
    compare_golden(tolerance):
        Cells that differ from the checked-in reference values.
    dominance_violations():
        Breaks of ``ESP >= SPM >= baseline`` and of ``SPM(H) > baseline(H)``.
    """
    def __init__(self, frame: pd.DataFrame):
        frame = frame[COLUMNS].reset_index(drop=True)
        bad = frame[(frame["bound"] <= 0) | (frame["bound"] > 1 + 1e-9)]
        if len(bad):
            raise InvariantError(f"bounds outside (0, 1]:\n{bad}")
        self.frame = frame

    def __len__(self) -> int:
        return len(self.frame)

    def value(self, table: str, setting: str, parameter: float, k: int = 0) -> float:
        df = self.frame
        hit = df[(df["table"] == table) & (df["setting"] == setting) & (df["parameter"] == parameter) & (df["k"] == k)]
        if hit.empty:
            raise KeyError((table, setting, parameter, k))
        return float(hit["bound"].iloc[0])

    def to_csv(self, path) -> None:
        self.frame.drop(columns="runtime").to_csv(path, index=False, float_format="%.10g")

    def to_markdown(self) -> str:
        sections = []
        for table, df in self.frame.groupby("table", sort=False):
            index, columns = LAYOUTS[table]
            grid = df.pivot_table(index=index, columns=columns, values="bound", aggfunc="first", sort=False)
            sections.append(f"### {table}\n\n{grid.to_markdown(floatfmt='.4f')}")
        return "\n\n".join(sections) + "\n"

    def to_records(self) -> List[Dict]:
        return self.frame.drop(columns="runtime").to_dict(orient="records")

    def compare_golden(self, tolerance: float = 1e-4) -> pd.DataFrame:
        """
        Cells farther than ``tolerance`` from their reference value
        (``status="mismatch"``) and cells with no reference value at their k
        (``status="missing"``, golden and diff left empty).
        """
        golden = reference_values(sorted(self.frame["table"].unique()))
        merged = self.frame.merge(golden, on=KEYS, how="left", suffixes=("", "_golden"))
        missing = merged["bound_golden"].isna()
        merged["diff"] = (merged["bound"] - merged["bound_golden"]).abs()
        merged["status"] = np.where(missing, "missing", "mismatch")
        logger.info(f"compared {int((~missing).sum())} of {len(merged)} cells against reference values")
        bad = merged[missing | (merged["diff"] > tolerance)][KEYS + ["bound", "bound_golden", "diff", "status"]]
        return bad.astype(object).where(bad.notna(), None).reset_index(drop=True)

    def dominance_violations(self, slack: float = 1e-9) -> List[str]:
        df = self.frame
        problems = []
        finite = df[df["table"].isin(["spm-n", "esp-n"])]
        pivot = finite.pivot_table(index=["parameter", "k"], columns="setting", values="bound", aggfunc="first")
        for (n, k), row in pivot.iterrows():
            spm, esp = row.get("spm-n"), row.get("esp-n")
            if spm is not None and not pd.isna(spm) and spm < baseline_spm(int(n)) - slack:
                problems.append(f"spm-n n={n:g} k={k}: {spm:.6f} below baseline")
            if spm is not None and esp is not None and not pd.isna(spm) and not pd.isna(esp) and esp < spm - slack:
                problems.append(f"n={n:g} k={k}: esp {esp:.6f} below spm {spm:.6f}")
        small = df[df["table"] == "small-n"]
        for n, group in small[small["setting"] != "baseline"].groupby("parameter"):
            values = group.groupby("setting")["bound"].max().to_dict()
            if values.get("esp", 1.0) < values.get("spm", 0.0) - slack:
                problems.append(f"small-n n={n:g}: esp below spm")
            if values.get("spm", 1.0) < baseline_spm(int(n)) - slack:
                problems.append(f"small-n n={n:g}: spm below baseline")
        multi = df[df["table"] == "multiunit"]
        for H, group in multi.groupby("parameter"):
            values = dict(zip(group["setting"], group["bound"]))
            if "spm-H" in values and not values["spm-H"] > baseline_multi(int(H)):
                problems.append(f"multiunit H={H:g}: spm-H does not beat baseline")
        return problems


def bound_tables(config: Optional[TableConfig] = None) -> BoundTable:
    """
    Regenerates the requested bound tables. Independent cells are solved in
    parallel with joblib; the row order is the cell order regardless of the
    worker count.
    """
    config = config or TableConfig()
    cells = config.cells()
    logger.info(f"solving {len(cells)} table cells with {config.jobs} worker(s)")
    rows = Parallel(n_jobs=config.jobs)(delayed(solve_cell)(cell) for cell in cells)
    table = BoundTable(best_over_k(pd.DataFrame(rows, columns=COLUMNS)))
    logger.info(f"solved {len(table)} cells in {table.frame['runtime'].sum():.1f}s of solver time")
    return table
