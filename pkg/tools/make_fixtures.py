"""Regenerate the bundled structure fixtures under src/igt/data/.

The peptide is an ideal extended strand built from internal coordinates;
the ligand is a substituted phenol placed above its middle residue. Run
from the repository root:  python tools/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from igt.structio import Atom, Molecule, write_sdf

OUT = Path(__file__).resolve().parents[1] / "src" / "igt" / "data"


def place(a, b, c, bond, angle, torsion):
    """NeRF: position of atom d bonded to c with angle b-c-d and torsion a-b-c-d (degrees)."""
    angle, torsion = np.radians(angle), np.radians(torsion)
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    d2 = np.array([-bond * np.cos(angle), bond * np.sin(angle) * np.cos(torsion),
                   bond * np.sin(angle) * np.sin(torsion)])
    return c + d2[0] * bc + d2[1] * m + d2[2] * n


RESIDUES = [
    ("ALA", [("CB", "C")]),
    ("SER", [("CB", "C"), ("OG", "O")]),
    ("CYS", [("CB", "C"), ("SG", "S")]),
    ("THR", [("CB", "C"), ("OG1", "O")]),
    ("LYS", [("CB", "C"), ("CG", "C")]),
]


def peptide():
    atoms = []  # (name, element, resname, resseq, xyz)
    n = np.array([0.0, 1.4, 0.3])
    ca = np.array([0.0, 0.0, 0.0])
    c = place(np.array([1.0, 2.0, 0.0]), n, ca, 1.525, 111.0, -60.0)
    phi, psi = -120.0, 130.0
    for k, (resname, side) in enumerate(RESIDUES):
        if k > 0:
            n_new = place(n, ca, c, 1.329, 116.0, psi)
            ca_new = place(ca, c, n_new, 1.458, 122.0, 180.0)
            c_new = place(c, n_new, ca_new, 1.525, 111.0, phi)
            n, ca, c = n_new, ca_new, c_new
        nxt = place(n, ca, c, 1.329, 116.0, psi)
        o = place(nxt, ca, c, 1.231, 121.0, 180.0)
        cb = place(c, n, ca, 1.530, 110.5, -122.5)
        res_atoms = [("N", "N", n), ("CA", "C", ca), ("C", "C", c), ("O", "O", o)]
        prev = (c, n, ca)
        sc_xyz = []
        for j, (name, el) in enumerate(side):
            if j == 0:
                xyz = cb
            else:
                length = {"O": 1.42, "S": 1.81, "C": 1.52}[el]
                xyz = place(prev[1], prev[2], sc_xyz[-1], length, 112.0, 175.0 - 40.0 * k)
                prev = (prev[1], prev[2], sc_xyz[-1])
            sc_xyz.append(xyz)
            res_atoms.append((name, el, xyz))
        for name, el, xyz in res_atoms:
            atoms.append((name, el, resname, k + 1, xyz))
    return atoms


def pdb_line(record, serial, name, alt, resname, resseq, xyz, element):
    pad_name = f" {name:<3}" if len(element) == 1 and len(name) < 4 else f"{name:<4}"
    return (f"{record:<6}{serial:5d} {pad_name}{alt}{resname:>3} A{resseq:4d}    "
            f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{20.0:6.2f}          {element:>2}")


def ligand(center, normal_hint):
    """9 heavy atoms (aromatic ring, OH, NH2, CH3) plus two polar hydrogens."""
    u = np.array([1.0, 0.0, 0.0])
    w = normal_hint / np.linalg.norm(normal_hint)
    u = u - (u @ w) * w
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    ring = [center + 1.39 * (np.cos(t) * u + np.sin(t) * v)
            for t in np.radians([0, 60, 120, 180, 240, 300])]
    out = lambda k, L: center + (1.39 + L) * (ring[k] - center) / 1.39  # noqa: E731
    o = out(0, 1.36)
    nn = out(3, 1.40)
    me = out(1, 1.50)
    ho = o + 0.96 * (o - center) / np.linalg.norm(o - center)
    hn = nn + 1.01 * (nn - center) / np.linalg.norm(nn - center)
    elems = ["C"] * 6 + ["O", "N", "C", "H", "H"]
    xyz = ring + [o, nn, me, ho, hn]
    bonds = [(k, (k + 1) % 6, "aromatic") for k in range(6)]
    bonds += [(0, 6, "single"), (3, 7, "single"), (1, 8, "single"), (6, 9, "single"), (7, 10, "single")]
    aromatic = [True] * 6 + [False] * 5
    atoms = tuple(Atom(e, tuple(float(c) for c in p), 0, ar, k)
                  for k, (e, p, ar) in enumerate(zip(elems, xyz, aromatic)))
    return Molecule(atoms, tuple(bonds), "aminocresol")


def rotation(axis, deg):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    t = np.radians(deg)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(t) * K + (1 - np.cos(t)) * K @ K


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    atoms = peptide()
    xyz = np.array([a[4] for a in atoms])
    mid = xyz[[k for k, a in enumerate(atoms) if a[3] == 3]].mean(axis=0)
    axis = xyz[-1] - xyz[0]
    up = np.cross(axis, [0.0, 0.0, 1.0])
    up /= np.linalg.norm(up)
    lig = ligand(mid + 4.7 * up + np.array([0.0, 0.0, 1.0]), up)

    lines = ["HEADER    IGT TEST PEPTIDE", "REMARK   synthetic 5-residue strand with one water"]
    serial = 1
    for name, el, resname, resseq, p in atoms:
        lines.append(pdb_line("ATOM", serial, name, " ", resname, resseq, p, el))
        serial += 1
        if name == "CA" and resseq == 2:
            # alternate conformer B of the CA, must be skipped by the parser
            lines.append(pdb_line("ATOM", serial, name, "B", resname, resseq, p + 0.4, el))
            serial += 1
        if name == "N":
            h = p + np.array([0.0, 0.0, 1.01])
            lines.append(pdb_line("ATOM", serial, "H", " ", resname, resseq, h, "H"))
            serial += 1
    water = lig.coords[6] + 3.1 * up
    lines.append(pdb_line("HETATM", serial, "O", " ", "HOH", 101, water, "O"))
    lines += ["TER", "END"]
    (OUT / "peptide.pdb").write_text("\n".join(lines) + "\n")

    poses = [lig]
    c = lig.coords.mean(axis=0)
    near = (lig.coords - c) @ rotation([0.3, 1.0, 0.2], 20).T + c + np.array([0.5, -0.4, 0.3])
    poses.append(lig.with_coords(near))
    far = (lig.coords - c) @ rotation(up, 180).T + c + 1.2 * np.cross(up, axis) / np.linalg.norm(axis)
    poses.append(lig.with_coords(far))
    named = [Molecule(p.atoms, p.bonds, f"pose{k}") for k, p in enumerate(poses)]
    (OUT / "ligand_poses.sdf").write_text(write_sdf(named))
    (OUT / "ligand_ref.sdf").write_text(write_sdf([Molecule(lig.atoms, lig.bonds, "crystal")]))

    eth = Molecule(
        (Atom("C", (-1.2, 0.1, 0.0), 0, False, 0), Atom("C", (0.3, 0.0, 0.0), 0, False, 1),
         Atom("O", (0.8, 1.3, 0.1), 0, False, 2)),
        ((0, 1, "single"), (1, 2, "single")), "ethanol")
    (OUT / "ethanol.sdf").write_text(write_sdf([eth]))

    manifest = [
        {"id": f"pose{k}", "target_id": "PEP", "receptor_path": "peptide.pdb",
         "ligand_path": "ligand_poses.sdf", "pose_index": k, "label": int(k < 2)}
        for k in range(3)
    ]
    (OUT / "fixture_manifest.jsonl").write_text("".join(json.dumps(r) + "\n" for r in manifest))


if __name__ == "__main__":
    main()
