"""Expectation-maximization alignment of the long and short motions.

The short deformation is kernelized into ``k`` seed descriptors; the
long deformation's descriptors are then soft-assigned to the seeds with
a softmax over scaled inner products (E-step) and the seeds are moved to
the responsibility-weighted descriptor means (M-step).  After ``N``
iterations both motions are recomposed from the converged assignment and
the originals are added back as residuals, so the output minus the input
is exactly the reconstructed alignment term.

Descriptors are non-overlapping ``patch x patch`` displacement blocks
flattened to vectors of length ``2 * patch**2``; the blocking is exactly
invertible after edge padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, TooFewDescriptors
from .fields import check_same_dims


@dataclass
class EmmaConfig:
    k: int = 64
    iterations: int = 5
    descriptor_patch: int = 4
    kernel: str = "inner-product"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.descriptor_patch < 1:
            raise ValueError("descriptor_patch must be >= 1")
        if self.kernel != "inner-product":
            raise ValueError(f"unknown kernel {self.kernel!r}")


def descriptorize(disp: np.ndarray, patch: int) -> np.ndarray:
    """Flatten a displacement field into an (n, 2*patch**2) matrix.

    The field is edge-padded so the patch size divides both dimensions;
    blocks are enumerated row-major.  :func:`reassemble` is the exact
    inverse.
    """
    d = np.asarray(disp, dtype=np.float64)
    h, w = d.shape[:2]
    ph = (-h) % patch
    pw = (-w) % patch
    padded = np.pad(d, ((0, ph), (0, pw), (0, 0)), mode="edge")
    hp, wp = padded.shape[:2]
    blocks = padded.reshape(hp // patch, patch, wp // patch, patch, 2)
    blocks = blocks.transpose(0, 2, 1, 3, 4)
    return blocks.reshape(-1, 2 * patch * patch)


def reassemble(desc: np.ndarray, shape: tuple[int, int], patch: int) -> np.ndarray:
    """Inverse of :func:`descriptorize` for a field of the given shape."""
    h, w = shape
    hp = h + ((-h) % patch)
    wp = w + ((-w) % patch)
    blocks = np.asarray(desc, dtype=np.float64).reshape(
        hp // patch, wp // patch, patch, patch, 2
    )
    padded = blocks.transpose(0, 2, 1, 3, 4).reshape(hp, wp, 2)
    return padded[:h, :w]


def kernelize(phi_s: np.ndarray, cfg: EmmaConfig) -> np.ndarray:
    """Select k seed descriptors by farthest-point sampling.

    Starts from the descriptor with the largest norm and greedily adds
    the not-yet-chosen descriptor farthest from the chosen set; ties
    break toward the lowest index, so the result is deterministic.
    """
    desc = descriptorize(phi_s, cfg.descriptor_patch)
    n = desc.shape[0]
    if cfg.k > n:
        raise TooFewDescriptors(f"k={cfg.k} seeds requested but only {n} descriptors")
    chosen = np.empty(cfg.k, dtype=np.intp)
    chosen[0] = int(np.argmax(np.linalg.norm(desc, axis=1)))
    mind = np.linalg.norm(desc - desc[chosen[0]], axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for i in range(1, cfg.k):
        masked = np.where(taken, -1.0, mind)
        nxt = int(np.argmax(masked))
        chosen[i] = nxt
        taken[nxt] = True
        mind = np.minimum(mind, np.linalg.norm(desc - desc[nxt], axis=1))
    return desc[chosen]


def _logits(desc: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    if desc.shape[1] != seeds.shape[1]:
        raise DimMismatch(
            f"descriptor dim {desc.shape[1]} != seed dim {seeds.shape[1]}"
        )
    return desc @ seeds.T / np.sqrt(desc.shape[1])


def e_step(phi_l_desc: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Row-softmax responsibilities over scaled inner products."""
    s = _logits(phi_l_desc, seeds)
    s = s - s.max(axis=1, keepdims=True)
    z = np.exp(s)
    return z / z.sum(axis=1, keepdims=True)


def m_step(
    z: np.ndarray, phi_l_desc: np.ndarray, prev_seeds: np.ndarray | None = None
) -> np.ndarray:
    """Responsibility-weighted descriptor means.

    Columns whose total responsibility falls below 1e-12 keep their
    previous seed (zeros when no previous seeds are supplied).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != phi_l_desc.shape[0]:
        raise DimMismatch(f"{z.shape[0]} responsibility rows for {phi_l_desc.shape[0]} descriptors")
    totals = z.sum(axis=0)
    alive = totals >= 1e-12
    seeds = np.zeros((z.shape[1], phi_l_desc.shape[1]), dtype=np.float64)
    if prev_seeds is not None:
        seeds[:] = prev_seeds
    if np.any(alive):
        seeds[alive] = (z[:, alive].T @ phi_l_desc) / totals[alive, None]
    return seeds


def elbo(phi_l_desc: np.ndarray, seeds: np.ndarray, z: np.ndarray) -> float:
    """Evidence lower bound sum_r sum_i z(log kappa - log z).

    ``kappa`` is the softmax-normalized inner-product kernel, i.e. the
    posterior the E-step computes; with ``z`` equal to that posterior the
    bound is tight and equals the model log-evidence.
    """
    s = _logits(phi_l_desc, seeds)
    s = s - s.max(axis=1, keepdims=True)
    log_kappa = s - np.log(np.sum(np.exp(s), axis=1, keepdims=True))
    zz = np.asarray(z, dtype=np.float64)
    log_z = np.where(zz > 0, np.log(np.where(zz > 0, zz, 1.0)), 0.0)
    return float(np.sum(zz * (log_kappa - log_z)))


def emma_align(
    phi_l: np.ndarray, phi_s: np.ndarray, cfg: EmmaConfig
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run the EM alignment loop and residually update both motions.

    Per iteration: E-step responsibilities of the long descriptors
    against the seeds, ELBO at the freshly tightened bound, then the
    M-step seed update.  After the loop the long motion is recomposed
    from the final responsibilities and seeds, the short motion is that
    recomposition projected once more through the responsibilities, and
    the input fields are added back as residuals.
    """
    L = np.asarray(phi_l, dtype=np.float64)
    S = np.asarray(phi_s, dtype=np.float64)
    check_same_dims(L, S, "long and short deformations")
    patch = cfg.descriptor_patch
    desc_l = descriptorize(L, patch)
    seeds = kernelize(S, cfg)
    trace: list[float] = []
    z = None
    for _ in range(cfg.iterations):
        z = e_step(desc_l, seeds)
        trace.append(elbo(desc_l, seeds, z))
        seeds = m_step(z, desc_l, prev_seeds=seeds)
    recon_l = z @ seeds
    proj_means = m_step(z, recon_l, prev_seeds=seeds)
    recon_s = z @ proj_means
    shape = L.shape[:2]
    out_l = reassemble(recon_l, shape, patch) + L
    out_s = reassemble(recon_s, shape, patch) + S
    return out_l, out_s, trace


def write_elbo_csv(trace: list[float], path) -> None:
    """Write an EMMA trace as ``iter,elbo`` CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iter,elbo\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{v:.10g}\n")
