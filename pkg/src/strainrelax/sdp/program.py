"""Problem and solution containers for linear-matrix-inequality form SDPs.

A program is: minimize c.z subject to, for each block j,
    const_j + sum_k z_k B_jk  positive semidefinite,
and sparse linear equalities E z = f.  Block coefficient data is stored as
flat entry arrays (variable, row, col, value) covering both triangles, which
is the layout the Schur-complement kernels consume directly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from ..errors import StructuralError, ValidationError


class PSDBlock:
    """Affine map z -> const + sum_k z_k B_k into symmetric side x side matrices."""

    __slots__ = ("side", "const", "var_index", "row", "col", "coef",
                 "_lin", "_linT", "_cols", "_col_offsets", "_sa", "_sb", "_sv",
                 "_gather")

    def __init__(self, side: int, const: np.ndarray, var_index, row, col, coef):
        self.side = int(side)
        const = np.asarray(const, dtype=float)
        if const.shape != (side, side):
            raise StructuralError(f"constant term must be {side}x{side}")
        if not np.allclose(const, const.T, atol=0.0):
            raise StructuralError("constant block term must be symmetric")
        self.const = const
        self.var_index = np.asarray(var_index, dtype=np.int64)
        self.row = np.asarray(row, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=np.float64)
        if not (len(self.var_index) == len(self.row) == len(self.col) == len(self.coef)):
            raise StructuralError("entry arrays must have equal length")
        if len(self.row) and (self.row.min() < 0 or self.row.max() >= side
                              or self.col.min() < 0 or self.col.max() >= side):
            raise StructuralError("entry position out of range")
        self._lin = None
        self._linT = None
        self._cols = None
        self._gather = None

    @classmethod
    def from_entries(cls, side, const, var_index, row, col, coef, m: int) -> "PSDBlock":
        blk = cls(side, const, var_index, row, col, coef)
        blk.validate(m)
        return blk

    def validate(self, m: int) -> None:
        if len(self.var_index) and (self.var_index.min() < 0 or self.var_index.max() >= m):
            raise StructuralError("block references a variable outside the program")
        lin = self.linear_operator(m)
        s = self.side
        perm = (np.arange(s * s).reshape(s, s).T).ravel()
        diff = (lin - lin[perm]).tocoo()
        if len(diff.data) and np.max(np.abs(diff.data)) > 0.0:
            raise StructuralError("block coefficient matrices must be symmetric")

    def linear_operator(self, m: int) -> sps.csr_matrix:
        """(side^2, m) sparse map z -> vec(linear part)."""
        if self._lin is None or self._lin.shape[1] != m:
            flat = self.row * self.side + self.col
            self._lin = sps.csr_matrix(
                (self.coef, (flat, self.var_index)), shape=(self.side * self.side, m))
            self._linT = self._lin.T.tocsr()
        return self._lin

    def adjoint_operator(self, m: int) -> sps.csr_matrix:
        self.linear_operator(m)
        return self._linT

    def apply(self, z: np.ndarray) -> np.ndarray:
        """const + linear part at z, as a dense symmetric matrix."""
        lin = self.linear_operator(len(z))
        return self.const + (lin @ z).reshape(self.side, self.side)

    # ---- cached structure for the Schur kernels -------------------------
    def schur_structure(self, m: int):
        """Entries grouped by variable plus the gather matrix (m, side^2)."""
        if self._cols is None:
            order = np.argsort(self.var_index, kind="stable")
            vi = self.var_index[order]
            self._sa = np.ascontiguousarray(self.row[order], dtype=np.int64)
            self._sb = np.ascontiguousarray(self.col[order], dtype=np.int64)
            self._sv = np.ascontiguousarray(self.coef[order], dtype=np.float64)
            cols, starts = np.unique(vi, return_index=True)
            self._cols = cols.astype(np.int64)
            self._col_offsets = np.concatenate(
                [starts, [len(vi)]]).astype(np.int64)
            flat = self.row * self.side + self.col
            self._gather = sps.csr_matrix(
                (self.coef, (self.var_index, flat)), shape=(m, self.side * self.side))
            self._gather.sum_duplicates()
        return (self._cols, self._col_offsets, self._sa, self._sb, self._sv,
                self._gather)


@dataclass
class ConicProgram:
    """min c.z  s.t.  per-block PSD constraints and E z = f."""

    m: int
    c: np.ndarray
    blocks: list[PSDBlock]
    eq: sps.csr_matrix | None = None
    eq_rhs: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        if len(self.c) != self.m:
            raise StructuralError(f"objective length {len(self.c)} != m = {self.m}")
        if not self.blocks and self.eq is None:
            raise StructuralError("program needs at least one block or equality")
        for blk in self.blocks:
            blk.validate(self.m)
        if self.eq is not None:
            self.eq = sps.csr_matrix(self.eq)
            if self.eq.shape[1] != self.m:
                raise StructuralError("equality matrix has wrong number of columns")
            self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).ravel()
            if len(self.eq_rhs) != self.eq.shape[0]:
                raise StructuralError("equality rhs length mismatch")

    @property
    def n_eq(self) -> int:
        return 0 if self.eq is None else self.eq.shape[0]

    def block_values(self, z: np.ndarray) -> list[np.ndarray]:
        return [blk.apply(z) for blk in self.blocks]


@dataclass
class Solution:
    """Solver output; all quantities are de-homogenized and recomputable."""

    status: str  # optimal | infeasible-detected | max-iters | numerical-failure
    z: np.ndarray
    obj_primal: float
    obj_dual: float
    y_eq: np.ndarray
    cone_duals: list[np.ndarray]
    slacks: list[np.ndarray]
    iterations: int
    primal_residual: float
    dual_residual: float
    gap_abs: float
    gap_rel: float
    detail: str = ""


@dataclass
class SolverOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iters: int = 200
    seed: int | None = None  # accepted for API stability; the method is deterministic
    step_fraction: float = 0.98
    regularization: float = 1e-12
    refinement_steps: int = 1
    verbose: bool = False


# --------------------------------------------------------------------------
# sparse text format (stable across implementations, round-trips floats)
# --------------------------------------------------------------------------

FORMAT_TAG = "SDP 1"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_program(prog: ConicProgram, path_or_file) -> None:
    """Serialize to the line-oriented sparse SDP text format.

    Layout: VARS, OBJ triplets, BLOCKS sides, ENTRIES (block var row col value
    with var == -1 for the constant term, upper triangle only), EQUALITIES
    triplets, RHS values.  Entry order is canonical so files diff cleanly.
    """
    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file, "w") if own else path_or_file
    try:
        f.write(f"{FORMAT_TAG}\n")
        f.write(f"VARS {prog.m}\n")
        nz = np.nonzero(prog.c)[0]
        f.write(f"OBJ {len(nz)}\n")
        for k in nz:
            f.write(f"{k} {_fmt(prog.c[k])}\n")
        f.write(f"BLOCKS {len(prog.blocks)}\n")
        for blk in prog.blocks:
            f.write(f"{blk.side}\n")
        lines = []
        for j, blk in enumerate(prog.blocks):
            for a in range(blk.side):
                for b in range(a, blk.side):
                    v = blk.const[a, b]
                    if v != 0.0:
                        lines.append((j, -1, a, b, v))
            upper = blk.row <= blk.col
            combo: dict[tuple[int, int, int, int], float] = {}
            for k, a, b, v in zip(blk.var_index[upper], blk.row[upper],
                                  blk.col[upper], blk.coef[upper]):
                key = (j, int(k), int(a), int(b))
                combo[key] = combo.get(key, 0.0) + v
            lines.extend((jj, kk, aa, bb, vv) for (jj, kk, aa, bb), vv in combo.items()
                         if vv != 0.0)
        lines.sort(key=lambda t: t[:4])
        f.write(f"ENTRIES {len(lines)}\n")
        for j, k, a, b, v in lines:
            f.write(f"{j} {k} {a} {b} {_fmt(v)}\n")
        if prog.eq is None:
            f.write("EQUALITIES 0 0\n")
        else:
            coo = prog.eq.tocoo()
            order = np.lexsort((coo.col, coo.row))
            f.write(f"EQUALITIES {prog.eq.shape[0]} {len(coo.data)}\n")
            for t in order:
                f.write(f"{coo.row[t]} {coo.col[t]} {_fmt(coo.data[t])}\n")
            f.write("RHS\n")
            for v in prog.eq_rhs:
                f.write(f"{_fmt(v)}\n")
        f.write("END\n")
    finally:
        if own:
            f.close()


def read_program(path_or_file) -> ConicProgram:
    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file) if own else path_or_file
    try:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    finally:
        if own:
            f.close()
    it = iter(lines)

    def expect(tag: str) -> list[str]:
        ln = next(it)
        if not ln.startswith(tag):
            raise ValidationError(f"expected {tag!r}, found {ln!r}")
        return ln.split()

    if next(it) != FORMAT_TAG:
        raise ValidationError("not a strainrelax SDP file")
    m = int(expect("VARS")[1])
    c = np.zeros(m)
    for _ in range(int(expect("OBJ")[1])):
        k, v = next(it).split()
        c[int(k)] = float(v)
    nb = int(expect("BLOCKS")[1])
    sides = [int(next(it)) for _ in range(nb)]
    consts = [np.zeros((s, s)) for s in sides]
    ent: list[list[list]] = [[[], [], [], []] for _ in range(nb)]
    for _ in range(int(expect("ENTRIES")[1])):
        j, k, a, b, v = next(it).split()
        j, k, a, b, v = int(j), int(k), int(a), int(b), float(v)
        if k == -1:
            consts[j][a, b] = v
            consts[j][b, a] = v
        else:
            ent[j][0].append(k); ent[j][1].append(a); ent[j][2].append(b); ent[j][3].append(v)
            if a != b:
                ent[j][0].append(k); ent[j][1].append(b); ent[j][2].append(a); ent[j][3].append(v)
    blocks = [PSDBlock(sides[j], consts[j], *ent[j]) for j in range(nb)]
    parts = expect("EQUALITIES")
    p, nnz = int(parts[1]), int(parts[2])
    eq = None
    rhs = None
    if p:
        ri, ci, data = [], [], []
        for _ in range(nnz):
            r_, k_, v_ = next(it).split()
            ri.append(int(r_)); ci.append(int(k_)); data.append(float(v_))
        expect("RHS")
        rhs = np.array([float(next(it)) for _ in range(p)])
        eq = sps.csr_matrix((data, (ri, ci)), shape=(p, m))
    return ConicProgram(m=m, c=c, blocks=blocks, eq=eq, eq_rhs=rhs)


def program_to_text(prog: ConicProgram) -> str:
    buf = io.StringIO()
    write_program(prog, buf)
    return buf.getvalue()


def program_from_text(text: str) -> ConicProgram:
    return read_program(io.StringIO(text))
