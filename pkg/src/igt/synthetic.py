"""Small generated datasets for smoke tests and the overfitting check.

Geometry is random but physically tame (1.5 Å bonds, ligand a few Å from the
receptor). In the separable set the label is planted in one ligand atom:
actives carry a charged nitrogen where inactives carry a neutral carbon.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .structio import Atom, ExampleRecord, Molecule, write_manifest, write_pdb, write_sdf

RECEPTOR_ELEMENTS = ("N", "C", "C", "O", "C", "C", "N", "C", "C", "O", "C", "S", "C", "N")


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def zigzag(n: int, bond: float = 1.5, rng=None, jitter: float = 0.0) -> np.ndarray:
    """Planar zig-zag chain along x with roughly tetrahedral angles."""
    step = np.array([bond * np.sin(np.radians(54.75)), bond * np.cos(np.radians(54.75)), 0.0])
    pts = np.zeros((n, 3))
    for k in range(1, n):
        s = step.copy()
        if k % 2 == 0:
            s[1] = -s[1]
        pts[k] = pts[k - 1] + s
    if rng is not None and jitter:
        pts += rng.uniform(-jitter, jitter, size=pts.shape)
    return pts


def synthetic_receptor(rng: np.random.Generator, name: str = "rec") -> Molecule:
    xyz = zigzag(len(RECEPTOR_ELEMENTS), rng=rng, jitter=0.05)
    xyz -= xyz.mean(axis=0)
    atoms = tuple(Atom(e, tuple(map(float, p)), 0, False, k, "GLY")
                  for k, (e, p) in enumerate(zip(RECEPTOR_ELEMENTS, xyz)))
    return Molecule(atoms, (), name)


def synthetic_ligand(rng: np.random.Generator, active: bool, name: str = "lig") -> Molecule:
    """Five-atom chain hovering 3.5-4.5 Å over the receptor centre."""
    xyz = zigzag(5, rng=rng, jitter=0.05)
    xyz = (xyz - xyz.mean(axis=0)) @ _random_rotation(rng).T
    xyz += np.array([0.0, 0.0, rng.uniform(3.5, 4.5)])
    elements = ["C", "C", "N" if active else "C", "O", "C"]
    charges = [0, 0, 1 if active else 0, 0, 0]
    atoms = tuple(Atom(e, tuple(map(float, p)), c, False, k)
                  for k, (e, p, c) in enumerate(zip(elements, xyz, charges)))
    bonds = tuple((k, k + 1, "single") for k in range(4))
    return Molecule(atoms, bonds, name)


def make_separable_dataset(out_dir, n_examples: int = 20, n_targets: int = 2, seed: int = 0) -> list:
    """Write receptors, ligands and ``manifest.jsonl``; labels alternate active/inactive."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    receptors = []
    for t in range(n_targets):
        path = out / f"target{t}.pdb"
        path.write_text(write_pdb(synthetic_receptor(rng, f"target{t}")))
        receptors.append(path)
    records = []
    for k in range(n_examples):
        label = k % 2
        t = (k // 2) % n_targets
        lig_path = out / f"lig{k:03d}.sdf"
        lig_path.write_text(write_sdf([synthetic_ligand(rng, bool(label), f"lig{k:03d}")]))
        records.append(ExampleRecord(f"ex{k:03d}", f"T{t}", str(receptors[t].resolve()),
                                     str(lig_path.resolve()), 0, label))
    write_manifest(out / "manifest.jsonl", records)
    return records
