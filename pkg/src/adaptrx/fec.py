"""Rate-1/2 (1296, 648) LDPC code: encoder, belief-propagation decoder,
frame interleaving and syndrome accounting.

The parity-check matrix is quasi-cyclic (12 x 24 base matrix, lifting size
54, the standard published construction of this exact size) and is shipped
as an alist file; the base description below regenerates it.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

LLR_CLIP = 20.0

BLOCK_SIZE = 54

# 12 x 24 circulant shift table; -1 marks an all-zero block. Left half is
# systematic, right half is the dual-diagonal parity part.
BASE_MATRIX = np.array([
    [40, -1, -1, -1, 22, -1, 49, 23, 43, -1, -1, -1,  1,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [50,  1, -1, -1, 48, 35, -1, -1, 13, -1, 30, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1],
    [39, 50, -1, -1,  4, -1,  2, -1, -1, -1, -1, 49, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1, -1],
    [33, -1, -1, 38, 37, -1, -1,  4,  1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1, -1],
    [45, -1, -1, -1,  0, 22, -1, -1, 20, 42, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1, -1],
    [51, -1, -1, 48, 35, -1, -1, -1, 44, -1, 18, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1, -1],
    [47, 11, -1, -1, -1, 17, -1, -1, 51, -1, -1, -1,  0, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1, -1],
    [ 5, -1, 25, -1,  6, -1, 45, -1, 13, 40, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1, -1],
    [33, -1, -1, 34, 24, -1, -1, -1, 23, -1, -1, 46, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1, -1],
    [ 1, -1, 27, -1,  1, -1, -1, -1, 38, -1, 44, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0, -1],
    [-1, 18, -1, -1, 23, -1, -1,  8,  0, 35, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0,  0],
    [49, -1, 17, -1, 30, -1, -1, -1, 34, -1, -1, 19,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  0],
], dtype=int)


def expand_base_matrix(base: np.ndarray = BASE_MATRIX,
                       block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Expand a circulant shift table into the full binary parity-check matrix."""
    rows, cols = base.shape
    h = np.zeros((rows * block_size, cols * block_size), dtype=np.uint8)
    eye = np.eye(block_size, dtype=np.uint8)
    for i in range(rows):
        for j in range(cols):
            s = base[i, j]
            if s >= 0:
                h[i * block_size:(i + 1) * block_size,
                  j * block_size:(j + 1) * block_size] = np.roll(eye, -(s % block_size), axis=0)
    return h


def gf2_rank(mat: np.ndarray) -> int:
    """Rank of a binary matrix over GF(2)."""
    m = mat.astype(np.uint8).copy()
    rank = 0
    n_cols = m.shape[1]
    for col in range(n_cols):
        pivot = np.nonzero(m[rank:, col])[0]
        if pivot.size == 0:
            continue
        p = rank + pivot[0]
        m[[rank, p]] = m[[p, rank]]
        hit = np.nonzero(m[:, col])[0]
        hit = hit[hit != rank]
        m[hit] ^= m[rank]
        rank += 1
        if rank == m.shape[0]:
            break
    return rank


def _gf2_solve_encoder(h: np.ndarray, k: int) -> np.ndarray:
    """Return E with parity = E @ info (mod 2) for H = [H_info | H_parity].

    Requires the parity part (last n-k columns) to be invertible over GF(2).
    """
    n_par = h.shape[0]
    a = np.concatenate([h[:, k:].copy(), h[:, :k].copy()], axis=1)  # [Hp | Hi]
    for col in range(n_par):
        pivot = np.nonzero(a[col:, col])[0]
        if pivot.size == 0:
            raise ValueError("parity submatrix is singular over GF(2)")
        p = col + pivot[0]
        if p != col:
            a[[col, p]] = a[[p, col]]
        hit = np.nonzero(a[:, col])[0]
        hit = hit[hit != col]
        a[hit] ^= a[col]
    return a[:, n_par:].copy()  # Hp^-1 @ Hi


def write_alist(h: np.ndarray, path) -> None:
    """Write a binary parity-check matrix in alist format (1-based indices)."""
    n_rows, n_cols = h.shape
    col_idx = [np.nonzero(h[:, j])[0] + 1 for j in range(n_cols)]
    row_idx = [np.nonzero(h[i, :])[0] + 1 for i in range(n_rows)]
    max_col = max(len(c) for c in col_idx)
    max_row = max(len(r) for r in row_idx)
    with open(path, "w") as f:
        f.write(f"{n_cols} {n_rows}\n{max_col} {max_row}\n")
        f.write(" ".join(str(len(c)) for c in col_idx) + "\n")
        f.write(" ".join(str(len(r)) for r in row_idx) + "\n")
        for c in col_idx:
            pad = [0] * (max_col - len(c))
            f.write(" ".join(map(str, list(c) + pad)) + "\n")
        for r in row_idx:
            pad = [0] * (max_row - len(r))
            f.write(" ".join(map(str, list(r) + pad)) + "\n")


def read_alist(path) -> np.ndarray:
    """Parse an alist file into a dense binary matrix."""
    with open(path) as f:
        tokens = f.read().split()
    it = iter(tokens)
    n_cols, n_rows = int(next(it)), int(next(it))
    next(it), next(it)
    col_deg = [int(next(it)) for _ in range(n_cols)]
    [int(next(it)) for _ in range(n_rows)]
    h = np.zeros((n_rows, n_cols), dtype=np.uint8)
    for j in range(n_cols):
        # column lists may be zero-padded to the max degree
        entries = []
        while len(entries) < col_deg[j]:
            v = int(next(it))
            if v > 0:
                entries.append(v)
        h[[v - 1 for v in entries], j] = 1
    return h


@dataclass
class DecodeResult:
    """Outputs of one belief-propagation decoding pass.

    LLR convention throughout the package: log P(bit=0) / P(bit=1).
    """

    llr_posterior: np.ndarray        # (n_cw, n)
    llr_extrinsic: np.ndarray        # posterior minus channel input
    hard_coded: np.ndarray           # (n_cw, n) uint8
    hard_info: np.ndarray            # (n_cw, k) uint8
    syndrome_satisfied: np.ndarray   # (n_cw,) fraction of checks fulfilled
    iterations_run: int


class LdpcCode:
    """Systematic quasi-cyclic LDPC code with a flooding sum-product decoder."""

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=np.uint8)
        self.h = h
        self.n = h.shape[1]
        self.k = self.n - h.shape[0]
        self._encoder = _gf2_solve_encoder(h, self.k)
        self._build_graph()

    @classmethod
    def from_alist(cls, path) -> "LdpcCode":
        return cls(read_alist(path))

    @classmethod
    def default(cls) -> "LdpcCode":
        """The packaged (1296, 648) code."""
        ref = resources.files("adaptrx").joinpath("data/qc_1296_648.alist")
        with resources.as_file(ref) as path:
            return cls.from_alist(path)

    def _build_graph(self):
        check_idx, var_idx = np.nonzero(self.h)
        self.n_edges = len(check_idx)
        self.edge_var = var_idx          # edges sorted by check, then var
        self.edge_check = check_idx
        n_checks = self.n - self.k

        self.check_degree = np.bincount(check_idx, minlength=n_checks)
        self.var_degree = np.bincount(var_idx, minlength=self.n)
        cmax = int(self.check_degree.max())
        vmax = int(self.var_degree.max())

        # padded edge-index tables; padded slots point at a dummy edge
        self._check_slots = np.full((n_checks, cmax), self.n_edges, dtype=np.int64)
        pos = np.zeros(n_checks, dtype=np.int64)
        for e in range(self.n_edges):
            c = check_idx[e]
            self._check_slots[c, pos[c]] = e
            pos[c] += 1
        self._var_slots = np.full((self.n, vmax), self.n_edges, dtype=np.int64)
        pos = np.zeros(self.n, dtype=np.int64)
        for e in range(self.n_edges):
            v = var_idx[e]
            self._var_slots[v, pos[v]] = e
            pos[v] += 1
        self._check_mask = self._check_slots < self.n_edges
        self._var_mask = self._var_slots < self.n_edges

    # --- encoding -----------------------------------------------------

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Systematic encoding; accepts a multiple of k bits, returns codewords.

        Output shape (n_cw * n,) for 1-D input, and (n_cw, n) when the input
        is already shaped (n_cw, k).
        """
        u = np.asarray(info_bits, dtype=np.uint8)
        flat = u.ndim == 1
        if flat:
            if u.size % self.k:
                raise ValueError(f"info length must be a multiple of {self.k}")
            u = u.reshape(-1, self.k)
        elif u.shape[-1] != self.k:
            raise ValueError(f"last axis must be {self.k}")
        parity = (u.astype(np.int64) @ self._encoder.T.astype(np.int64)) % 2
        cw = np.concatenate([u, parity.astype(np.uint8)], axis=1)
        return cw.ravel() if flat else cw

    def syndrome(self, codewords: np.ndarray) -> np.ndarray:
        """(n_cw, n-k) parity-check values of hard bit vectors."""
        c = np.atleast_2d(np.asarray(codewords, dtype=np.uint8))
        on_edges = np.concatenate(
            [c[:, self.edge_var], np.zeros((c.shape[0], 1), dtype=np.uint8)],
            axis=1)
        return (on_edges[:, self._check_slots].sum(axis=2) & 1).astype(np.uint8)

    def syndrome_fraction(self, codewords: np.ndarray) -> float:
        """Fraction of satisfied parity checks, averaged over the batch."""
        s = self.syndrome(codewords)
        return float(1.0 - s.mean())

    # --- decoding -----------------------------------------------------

    def bp_decode(self, llr_in: np.ndarray, max_iters: int = 20,
                  priors: np.ndarray | None = None,
                  state: np.ndarray | None = None,
                  allow_early_exit: bool = False,
                  clip: float = LLR_CLIP) -> tuple[DecodeResult, np.ndarray]:
        """Flooding sum-product decoding of one or more codewords.

        ``llr_in`` has shape (n,) or (n_cw, n). ``state`` carries the
        check-to-variable messages of a previous call so decoding can be
        continued in fixed-iteration segments with refreshed channel LLRs
        (iterative detection schedules). Returns the result and the final
        message state.
        """
        llr = np.atleast_2d(np.asarray(llr_in, dtype=np.float64))
        if llr.shape[1] != self.n:
            raise ValueError(f"LLR length must be {self.n}")
        if priors is not None:
            llr = llr + np.atleast_2d(priors)
        llr = np.clip(llr, -clip, clip)
        n_cw = llr.shape[0]

        if state is None:
            msg_cv = np.zeros((n_cw, self.n_edges), dtype=np.float64)
        else:
            msg_cv = state.copy()

        iterations = 0
        for _ in range(max_iters):
            msg_cv = self._iterate(llr, msg_cv, clip)
            iterations += 1
            if allow_early_exit:
                post = llr + self._total_cv(msg_cv)
                hard = (post < 0).astype(np.uint8)
                if not self.syndrome(hard).any():
                    break

        post = llr + self._total_cv(msg_cv)
        hard = (post < 0).astype(np.uint8)
        synd = self.syndrome(hard)
        result = DecodeResult(
            llr_posterior=post,
            llr_extrinsic=post - llr,
            hard_coded=hard,
            hard_info=hard[:, :self.k],
            syndrome_satisfied=1.0 - synd.mean(axis=1),
            iterations_run=iterations,
        )
        return result, msg_cv

    def _total_cv(self, msg_cv: np.ndarray) -> np.ndarray:
        """Sum of incoming check messages per variable node."""
        padded = np.concatenate(
            [msg_cv, np.zeros((msg_cv.shape[0], 1))], axis=1)
        return padded[:, self._var_slots].sum(axis=2)

    def _iterate(self, llr: np.ndarray, msg_cv: np.ndarray,
                 clip: float) -> np.ndarray:
        n_cw = llr.shape[0]
        # variable update: leave-one-out sums of check messages
        total = llr + self._total_cv(msg_cv)          # (n_cw, n)
        msg_vc = total[:, self.edge_var] - msg_cv      # (n_cw, n_edges)

        # check update: leave-one-out boxplus via tanh products
        padded = np.concatenate(
            [msg_vc, np.zeros((n_cw, 1))], axis=1)
        t = np.tanh(0.5 * padded[:, self._check_slots])  # (n_cw, checks, cmax)
        t[:, ~self._check_mask] = 1.0

        deg = t.shape[2]
        prefix = np.ones_like(t)
        suffix = np.ones_like(t)
        np.cumprod(t[:, :, :-1], axis=2, out=prefix[:, :, 1:])
        np.cumprod(t[:, :, :0:-1], axis=2, out=suffix[:, :, deg - 2::-1])
        prod_excl = prefix * suffix

        prod_excl = np.clip(prod_excl, -0.9999999999999998, 0.9999999999999998)
        new_msgs = np.clip(2.0 * np.arctanh(prod_excl), -clip, clip)

        msg_cv_new = np.empty_like(msg_cv)
        flat_slots = self._check_slots[self._check_mask]
        msg_cv_new[:, flat_slots] = new_msgs[:, self._check_mask]
        return msg_cv_new


class Interleaver:
    """Seeded bijection over the frame's data-bit positions."""

    def __init__(self, length: int, seed: int | None = 0):
        self.length = length
        if seed is None:
            self.perm = np.arange(length)
        else:
            self.perm = np.random.default_rng(seed).permutation(length)
        self.inv = np.argsort(self.perm)

    @classmethod
    def identity(cls, length: int) -> "Interleaver":
        return cls(length, seed=None)

    def interleave(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.length:
            raise ValueError(f"last axis must be {self.length}")
        return x[..., self.perm]

    def deinterleave(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape[-1] != self.length:
            raise ValueError(f"last axis must be {self.length}")
        return y[..., self.inv]
