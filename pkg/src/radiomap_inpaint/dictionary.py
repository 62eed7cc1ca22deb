"""Patch dictionaries: K-SVD training, masked lasso coding and dictionary fill.

Atoms are columns of ``A`` (shape ``(n*n, K)``), each of unit Euclidean norm.
Patches are flattened row-major.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Patch

MAGIC = b"RMDL"
BLOB_VERSION = 1
DUPLICATE_TOL = 1e-9


class DictionaryError(ValueError):
    pass


@dataclass
class PatchDictionary:
    atoms: np.ndarray  # (n*n, K)
    patch_size: int
    iterations: int = 0
    objective: list = field(default_factory=list)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2 or self.atoms.shape[0] != self.patch_size ** 2:
            raise DictionaryError(
                f"atoms must have shape ({self.patch_size ** 2}, K), got {self.atoms.shape}")
        if self.atoms.shape[1] < 1:
            raise DictionaryError("dictionary needs at least one atom")

    @property
    def K(self) -> int:
        return self.atoms.shape[1]

    @property
    def final_objective(self) -> Optional[float]:
        return self.objective[-1] if self.objective else None


@dataclass(frozen=True)
class SparseCode:
    coef: np.ndarray
    nnz: int
    residual_norm: float
    objective: float
    sweeps: int
    trace: tuple = ()


# --- orthogonal matching pursuit -------------------------------------------

def omp(D: np.ndarray, X: np.ndarray, sparsity: int, chunk: int = 256) -> np.ndarray:
    """Batch OMP: code every column of ``X`` with at most ``sparsity`` atoms.

    All samples advance in lockstep; least-squares coefficients are solved on
    the Gram sub-blocks. Returns a dense ``(K, N)`` coefficient matrix.
    """
    D = np.asarray(D, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return omp(D, X[:, None], sparsity, chunk)[:, 0]
    m, K = D.shape
    T = int(min(sparsity, K, m))
    G = D.T @ D
    codes = np.zeros((K, X.shape[1]))
    for s in range(0, X.shape[1], chunk):
        Xc = X[:, s:s + chunk]
        n = Xc.shape[1]
        cols = np.arange(n)
        A0 = D.T @ Xc
        corr = A0.copy()
        supp = np.zeros((n, T), dtype=np.int64)
        gamma = np.zeros((n, 0))
        scale = np.abs(A0).max(axis=0) + 1e-300
        live = np.ones(n, dtype=bool)
        n_live = np.zeros(n, dtype=np.int64)
        used = 0
        for t in range(T):
            mag = np.abs(corr)
            if t:
                mag[supp[:, :t].T, cols] = -1.0
            k = np.argmax(mag, axis=0)
            # samples already explained exactly stop growing their support
            live &= mag[k, cols] > 1e-13 * scale
            if not live.any():
                break
            n_live += live
            supp[:, t] = np.where(live, k, supp[:, t - 1] if t else k)
            S = supp[:, :t + 1]
            Gs = G[S[:, :, None], S[:, None, :]]
            b = A0[S, cols[:, None]]
            # padded positions of stopped samples become decoupled identity rows
            pad = np.arange(t + 1)[None, :] >= n_live[:, None]
            if pad.any():
                Gs[pad[:, :, None] | pad[:, None, :]] = 0.0
                diag = np.einsum("nii->ni", Gs)
                diag[pad] = 1.0
                b[pad] = 0.0
            try:
                gamma = np.linalg.solve(Gs, b[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                gamma = np.stack([np.linalg.lstsq(Gs[i], b[i], rcond=None)[0] for i in range(n)])
            corr = A0 - np.einsum("kns,ns->kn", G[:, S], gamma)
            used = t + 1
        if used:
            S = supp[:, :used]
            np.add.at(codes, (S.T, np.broadcast_to(cols + s, (used, n))), gamma.T)
    return codes


def _sq_err(X, D, codes):
    R = X - D @ codes
    return np.einsum("ij,ij->j", R, R), R


# --- K-SVD ----------------------------------------------------------------

def _initial_atoms(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    m, N = X.shape
    norms = np.linalg.norm(X, axis=0)
    chosen: list[np.ndarray] = []
    for idx in rng.permutation(N):
        if norms[idx] == 0:
            continue
        a = X[:, idx] / norms[idx]
        if all(abs(a @ c) < 1 - DUPLICATE_TOL for c in chosen):
            chosen.append(a)
            if len(chosen) == K:
                break
    while len(chosen) < K:
        a = rng.standard_normal(m)
        a /= np.linalg.norm(a)
        if all(abs(a @ c) < 1 - DUPLICATE_TOL for c in chosen):
            chosen.append(a)
    return np.column_stack(chosen)


def _canonical_sign(D, codes):
    # first non-negligible entry of every atom positive
    for k in range(D.shape[1]):
        col = D[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            D[:, k] = -col
            codes[k] = -codes[k]


def train_ksvd(samples, K: int, iterations: int = 10, sparsity: int = 10, seed: int = 0,
               patch_size: Optional[int] = None) -> PatchDictionary:
    """Learn ``K`` unit-norm atoms from fully observed training patches.

    ``samples`` is an ``(N, n*n)`` array (or a list of ``n x n`` patches).
    Each iteration runs OMP coding, then rank-1 atom updates. A sample keeps
    its previous code when the new OMP code is not better, and an atom update
    is only accepted when it lowers the error, so the recorded objective
    ``sum ||x - A b||^2`` never increases. Unused or duplicated atoms are
    replaced with the worst-represented training sample.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.reshape(arr.shape[0], -1)
    if arr.ndim != 2:
        raise DictionaryError("samples must be an (N, n*n) array or a list of patches")
    N, m = arr.shape
    n = patch_size or int(round(np.sqrt(m)))
    if n * n != m:
        raise DictionaryError(f"sample length {m} is not a square patch")
    if K < 1:
        raise DictionaryError("K must be >= 1")
    if N < K:
        raise DictionaryError(f"need at least K={K} samples, got {N}")
    if not np.all(np.isfinite(arr)):
        raise DictionaryError("samples contain non-finite values")
    if not np.any(arr):
        raise DictionaryError("all training samples are zero; nothing to learn")
    X = arr.T.copy()
    rng = np.random.default_rng(seed)
    D = _initial_atoms(X, K, rng)
    codes = np.zeros((K, N))
    err = np.einsum("ij,ij->j", X, X)
    trace = []
    for it in range(iterations):
        new_codes = omp(D, X, sparsity)
        new_err, _ = _sq_err(X, D, new_codes)
        better = new_err < err if it else np.ones(N, dtype=bool)
        codes[:, better] = new_codes[:, better]
        err, R = _sq_err(X, D, codes)

        for k in range(K):
            omega = np.flatnonzero(codes[k])
            if omega.size == 0:
                continue
            E = R[:, omega] + np.outer(D[:, k], codes[k, omega])
            old = float(np.einsum("ij,ij->", R[:, omega], R[:, omega]))
            atom = _leading_left_vector(E)
            if atom is None:
                continue
            row = atom @ E
            Rn = E - np.outer(atom, row)
            if float(np.einsum("ij,ij->", Rn, Rn)) < old:
                D[:, k] = atom
                codes[k, omega] = row
                R[:, omega] = Rn

        _merge_duplicates(D, codes)
        err, R = _sq_err(X, D, codes)
        _replace_unused(D, codes, X, err)
        trace.append(float(err.sum()))
    if iterations == 0:
        trace.append(float(err.sum()))
    _canonical_sign(D, codes)
    return PatchDictionary(D, n, iterations, trace)


def _leading_left_vector(E):
    """Top left singular vector of ``E`` via the smaller Gram matrix (None if E == 0)."""
    m, k = E.shape
    if k <= m:
        w, V = np.linalg.eigh(E.T @ E)
        if not w[-1] > 0:
            return None
        u = E @ V[:, -1]
    else:
        w, U = np.linalg.eigh(E @ E.T)
        if not w[-1] > 0:
            return None
        u = U[:, -1]
    norm = np.linalg.norm(u)
    return u / norm if norm > 0 else None


def _merge_duplicates(D, codes):
    K = D.shape[1]
    if K < 2:
        return
    G = D.T @ D
    np.fill_diagonal(G, 0.0)
    for k in range(K):
        dup = np.flatnonzero(np.abs(G[k, :k]) >= 1 - DUPLICATE_TOL)
        if dup.size:
            j = dup[0]
            codes[j] += np.sign(G[k, j]) * codes[k]
            codes[k] = 0.0
            G[k, :] = 0.0
            G[:, k] = 0.0


def _replace_unused(D, codes, X, err):
    unused = np.flatnonzero(~codes.any(axis=1))
    if unused.size == 0:
        return
    norms = np.linalg.norm(X, axis=0)
    order = [i for i in np.argsort(-err, kind="stable") if norms[i] > 0]
    pos = 0
    for k in unused:
        while pos < len(order):
            cand = X[:, order[pos]] / norms[order[pos]]
            pos += 1
            others = np.delete(D, k, axis=1)
            if others.size == 0 or np.max(np.abs(others.T @ cand)) < 1 - DUPLICATE_TOL:
                D[:, k] = cand
                break


# --- masked lasso ----------------------------------------------------------

def lasso_objective(A, x, beta, lam) -> float:
    r = x - A @ beta
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def lambda_max(A, x) -> float:
    """Smallest penalty for which the all-zero code is optimal."""
    return float(np.max(np.abs(np.asarray(A).T @ np.asarray(x)))) if np.size(A) else 0.0


def lasso_cd(A, x, lam: float, tol: float = 1e-8, max_sweeps: int = 500,
             record: bool = False) -> SparseCode:
    """Coordinate-descent lasso on ``0.5||x - A b||^2 + lam ||b||_1``.

    Works on the Gram matrix. After a full sweep it iterates over the active
    set until converged, then confirms with another full sweep.
    """
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    K = A.shape[1]
    G = A.T @ A
    g = A.T @ x  # g = A^T (x - A beta)
    diag = np.diag(G).tolist()
    beta = np.zeros(K)
    trace = [lasso_objective(A, x, beta, lam)] if record else []
    full = [j for j in range(K) if diag[j] > 0]
    sweeps = 0
    check_all = True
    coords = full
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in coords:
            bj = beta[j]
            rho = g[j] + diag[j] * bj
            if rho > lam:
                new = (rho - lam) / diag[j]
            elif rho < -lam:
                new = (rho + lam) / diag[j]
            else:
                new = 0.0
            delta = new - bj
            if delta != 0.0:
                g -= G[:, j] * delta
                beta[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if record:
            trace.append(lasso_objective(A, x, beta, lam))
        if max_change < tol:
            if check_all:
                break
            coords, check_all = full, True
        else:
            coords = [j for j in full if beta[j] != 0.0] or full
            check_all = coords is full
    resid = x - A @ beta
    return SparseCode(beta, int(np.count_nonzero(beta)), float(np.linalg.norm(resid)),
                      lasso_objective(A, x, beta, lam), sweeps, tuple(trace))


def sparse_code_masked(dictionary, x, observed, lam: float = 0.05, **kw) -> SparseCode:
    """Lasso code of a patch using only its observed rows of the dictionary.

    Rows of ``A`` are restricted, not renormalized.
    """
    A = dictionary.atoms if isinstance(dictionary, PatchDictionary) else np.asarray(dictionary)
    x = np.asarray(x, dtype=np.float64).ravel()
    obs = np.asarray(observed, dtype=bool).ravel()
    if not obs.any():
        raise DictionaryError("patch has no observed cells to code against")
    return lasso_cd(A[obs], x[obs], lam, **kw)


def epd_fill(dictionary: PatchDictionary, patch: Patch, lam: float = 0.05) -> np.ndarray:
    """Fill the missing in-bounds cells of a patch from its dictionary code.

    Returns an ``n x n`` array: observed cells copied verbatim, missing valid
    cells from ``A @ beta``, out-of-bounds offsets untouched.
    """
    if patch.size != dictionary.patch_size:
        raise DictionaryError(f"patch size {patch.size} != dictionary patch size {dictionary.patch_size}")
    out = np.array(patch.values)
    missing = patch.valid & ~patch.observed
    if not missing.any():
        return out
    if not patch.observed.any():
        raise DictionaryError(f"patch at {patch.center} has no observed cells")
    code = sparse_code_masked(dictionary, patch.values, patch.observed, lam)
    recon = (dictionary.atoms @ code.coef).reshape(patch.size, patch.size)
    out[missing] = recon[missing]
    return out


# --- sampling and serialization -------------------------------------------

def sample_training_patches(values, observed, n: int, count: int = 2000, seed: int = 0,
                            extra: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Randomly draw fully observed n x n windows; returns ``(count', n*n)``."""
    from .exemplar import full_window_origins

    values = np.asarray(values, dtype=np.float64)
    origins = full_window_origins(observed, n)
    if len(origins) == 0:
        raise DictionaryError(f"no fully observed {n}x{n} window to train from")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(origins), size=min(count, len(origins)), replace=False)
    pick.sort()
    rows = [values[r:r + n, c:c + n].ravel() for r, c in origins[pick]]
    rows.extend(np.asarray(e, dtype=np.float64).ravel() for e in extra)
    return np.array(rows)


def save_dictionary(dictionary: PatchDictionary, path) -> None:
    n, K = dictionary.patch_size, dictionary.K
    header = MAGIC + struct.pack("<III", BLOB_VERSION, n, K)
    body = np.ascontiguousarray(dictionary.atoms.T, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_dictionary(path) -> PatchDictionary:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise DictionaryError(f"{path}: not a dictionary blob (bad magic)")
    version, n, K = struct.unpack("<III", blob[4:16])
    if version != BLOB_VERSION:
        raise DictionaryError(f"{path}: unsupported blob version {version}")
    expected = 16 + 8 * n * n * K
    if len(blob) != expected:
        raise DictionaryError(f"{path}: expected {expected} bytes, got {len(blob)}")
    atoms = np.frombuffer(blob, dtype="<f8", offset=16).reshape(K, n * n).T.astype(np.float64)
    return PatchDictionary(atoms, n)
