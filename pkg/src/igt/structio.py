"""Minimal PDB / SDF (V2000) readers and the JSON-lines dataset manifest.

Only the subset of each format that the rest of the package consumes is
understood. PDB files yield a single bond-less :class:`Molecule`; SDF files
yield one molecule per ``$$$$``-terminated record with its bond table.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyStructureError, ManifestError, ParseError

ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr "
    "Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
_ELEMENT_SET = frozenset(ELEMENTS)

BOND_ORDERS = ("single", "double", "triple", "aromatic")
_SDF_BOND_CODES = {1: "single", 2: "double", 3: "triple", 4: "aromatic"}
_SDF_BOND_CODES_INV = {v: k for k, v in _SDF_BOND_CODES.items()}
# V2000 atom-block charge field; 4 is "doublet radical" and carries no charge.
_SDF_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_SDF_CHARGE_CODES_INV = {0: 0, 3: 1, 2: 2, 1: 3, -1: 5, -2: 6, -3: 7}


def canonical_element(symbol: str) -> str:
    """Return the periodic-table spelling of ``symbol`` ("CL" -> "Cl"), or "X"."""
    s = symbol.strip()
    if not s:
        return "X"
    s = s[0].upper() + s[1:].lower()
    if s == "D":
        s = "H"
    return s if s in _ELEMENT_SET else "X"


@dataclass(frozen=True)
class Atom:
    element: str
    position: tuple
    formal_charge: int = 0
    is_aromatic: bool = False
    source_index: int = 0
    residue_name: str = ""
    is_hetatm: bool = False

    def __post_init__(self):
        if not self.element:
            raise ValueError("atom element must be non-empty")
        if len(self.position) != 3 or not all(np.isfinite(self.position)):
            raise ValueError(f"non-finite atom position {self.position!r}")


@dataclass(frozen=True)
class Molecule:
    atoms: tuple
    bonds: tuple = ()
    name: str = ""

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for i, j, order in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"invalid bond ({i}, {j}) for {n} atoms")
            if order not in BOND_ORDERS:
                raise ValueError(f"unknown bond order {order!r}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bond {key}")
            seen.add(key)

    def __len__(self):
        return len(self.atoms)

    @property
    def coords(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=np.float64).reshape(-1, 3)

    @property
    def elements(self) -> list:
        return [a.element for a in self.atoms]

    def heavy(self) -> "Molecule":
        """Drop hydrogens and renumber the bond table accordingly."""
        keep = [k for k, a in enumerate(self.atoms) if a.element != "H"]
        if len(keep) == len(self.atoms):
            return self
        remap = {old: new for new, old in enumerate(keep)}
        bonds = tuple(
            (remap[i], remap[j], o) for i, j, o in self.bonds if i in remap and j in remap
        )
        return Molecule(tuple(self.atoms[k] for k in keep), bonds, self.name)

    def with_coords(self, coords: np.ndarray) -> "Molecule":
        coords = np.asarray(coords, dtype=np.float64)
        atoms = tuple(
            Atom(a.element, tuple(float(c) for c in xyz), a.formal_charge, a.is_aromatic,
                 a.source_index, a.residue_name, a.is_hetatm)
            for a, xyz in zip(self.atoms, coords)
        )
        return Molecule(atoms, self.bonds, self.name)

    def permuted(self, order: Sequence[int]) -> "Molecule":
        """Reorder atoms so that new atom ``k`` is old atom ``order[k]``."""
        inv = {old: new for new, old in enumerate(order)}
        atoms = tuple(self.atoms[o] for o in order)
        bonds = tuple((inv[i], inv[j], o) for i, j, o in self.bonds)
        return Molecule(atoms, bonds, self.name)


@dataclass(frozen=True)
class ExampleRecord:
    id: str
    target_id: str
    receptor_path: str
    ligand_path: str
    pose_index: int = 0
    label: Optional[int] = None
    rmsd: Optional[float] = None

    def __post_init__(self):
        if self.pose_index < 0:
            raise ValueError("pose_index must be >= 0")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.rmsd is not None and not self.rmsd >= 0:
            raise ValueError(f"rmsd must be >= 0, got {self.rmsd!r}")


# --------------------------------------------------------------------- PDB


def _pdb_element(line: str, name_field: str) -> str:
    el = line[76:78].strip() if len(line) >= 77 else ""
    if el and el.isalpha():
        return canonical_element(el)
    # columns 13-14 hold a right-justified element: a blank column 13 means
    # a one-letter element in column 14
    stripped = name_field.lstrip("0123456789")
    letters = ""
    for ch in stripped.strip():
        if not ch.isalpha():
            break
        letters += ch
    if not letters:
        return "X"
    if name_field[:1] == " " or len(letters) == 1:
        return canonical_element(letters[0])
    two = canonical_element(letters[:2])
    return two if two != "X" else canonical_element(letters[0])


def parse_pdb(text: str, name: str = "") -> Molecule:
    """Parse ATOM/HETATM records of a PDB file into a bond-less molecule.

    Hydrogens and alternate locations other than ' ' / 'A' are skipped.
    """
    atoms = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[:6]
        if record not in ("ATOM  ", "HETATM"):
            continue
        alt = line[16:17] if len(line) > 16 else " "
        if alt not in (" ", "A", ""):
            continue
        name_field = line[12:16].ljust(4)
        try:
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError:
            raise ParseError(f"line {lineno}: malformed coordinate field") from None
        if not all(np.isfinite(xyz)):
            raise ParseError(f"line {lineno}: non-finite coordinate")
        element = _pdb_element(line, name_field)
        if element == "H":
            continue
        atoms.append(Atom(
            element=element,
            position=xyz,
            source_index=len(atoms),
            residue_name=line[17:20].strip(),
            is_hetatm=record == "HETATM",
        ))
    if not atoms:
        raise EmptyStructureError(f"no heavy ATOM/HETATM records in {name or 'PDB input'}")
    return Molecule(tuple(atoms), (), name)


def write_pdb(mol: Molecule) -> str:
    lines = []
    for k, a in enumerate(mol.atoms):
        record = "HETATM" if a.is_hetatm else "ATOM  "
        el = a.element if a.element != "X" else "C"
        name = f" {el:<3}" if len(el) == 1 else f"{el:<4}"
        x, y, z = a.position
        lines.append(
            f"{record}{k + 1:5d} {name} {a.residue_name or 'UNK':>3} A{1:4d}    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          {el:>2}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- SDF


def _int_field(line: str, lo: int, hi: int, what: str, lineno: int) -> int:
    try:
        return int(line[lo:hi])
    except ValueError:
        raise ParseError(f"line {lineno}: malformed {what} field {line[lo:hi]!r}") from None


_PROPERTY_PREFIXES = ("M  ", "A  ", "V  ", "G  ", "S  ")


def _parse_sdf_record(lines: list, start: int) -> Molecule:
    """``lines`` is one record; ``start`` is the file line number of lines[0]."""
    if len(lines) < 4:
        raise ParseError(f"line {start}: truncated SDF header")
    name = lines[0].strip()
    counts = lines[3]
    counts_no = start + 3
    if "V3000" in counts:
        raise ParseError(f"line {counts_no}: V3000 connection tables are not supported")
    n_atoms = _int_field(counts, 0, 3, "atom count", counts_no)
    n_bonds = _int_field(counts, 3, 6, "bond count", counts_no)
    if len(lines) < 4 + n_atoms + n_bonds:
        raise ParseError(
            f"line {counts_no}: counts line declares {n_atoms} atoms and {n_bonds} bonds "
            f"but the record has only {len(lines) - 4} block lines"
        )

    elements, coords, charges = [], [], []
    for k in range(n_atoms):
        line = lines[4 + k]
        lineno = start + 4 + k
        try:
            xyz = (float(line[0:10]), float(line[10:20]), float(line[20:30]))
        except ValueError:
            raise ParseError(
                f"line {lineno}: counts line mismatch or malformed atom row"
            ) from None
        symbol = line[31:34].strip()
        if not symbol:
            raise ParseError(f"line {lineno}: missing element symbol")
        code = _int_field(line, 36, 39, "charge", lineno) if line[36:39].strip() else 0
        elements.append(canonical_element(symbol))
        coords.append(xyz)
        charges.append(_SDF_CHARGE_CODES.get(code, 0))

    bonds = []
    aromatic = [False] * n_atoms
    for k in range(n_bonds):
        line = lines[4 + n_atoms + k]
        lineno = start + 4 + n_atoms + k
        if line.startswith(_PROPERTY_PREFIXES):
            raise ParseError(f"line {lineno}: counts line mismatch, bond block ends early")
        i = _int_field(line, 0, 3, "bond atom", lineno) - 1
        j = _int_field(line, 3, 6, "bond atom", lineno) - 1
        code = _int_field(line, 6, 9, "bond order", lineno)
        if code not in _SDF_BOND_CODES:
            raise ParseError(f"line {lineno}: unknown bond order code {code}")
        if not (0 <= i < n_atoms and 0 <= j < n_atoms) or i == j:
            raise ParseError(f"line {lineno}: bond references invalid atoms")
        order = _SDF_BOND_CODES[code]
        if order == "aromatic":
            aromatic[i] = aromatic[j] = True
        bonds.append((i, j, order))

    # the block must end exactly where the counts line says it does
    tail_idx = 4 + n_atoms + n_bonds
    if tail_idx < len(lines):
        tail = lines[tail_idx]
        if tail.strip() and not tail.startswith(_PROPERTY_PREFIXES) and not tail.startswith(">"):
            raise ParseError(
                f"line {start + tail_idx}: counts line mismatch, unexpected row after bond block"
            )

    for k in range(tail_idx, len(lines)):
        line = lines[k]
        if line.startswith("M  END") or line.startswith(">"):
            break
        if line.startswith("M  CHG"):
            parts = line.split()
            try:
                n = int(parts[2])
                for p in range(n):
                    idx = int(parts[3 + 2 * p]) - 1
                    charges[idx] = int(parts[4 + 2 * p])
            except (ValueError, IndexError):
                raise ParseError(f"line {start + k}: malformed M  CHG property") from None

    atoms = tuple(
        Atom(elements[k], coords[k], charges[k], aromatic[k], k) for k in range(n_atoms)
    )
    try:
        return Molecule(atoms, tuple(bonds), name)
    except ValueError as exc:
        raise ParseError(f"line {start}: {exc}") from None


def parse_sdf(text: str) -> list:
    """Parse every V2000 record of an SDF stream."""
    molecules = []
    record: list = []
    record_start = 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("$$$$"):
            molecules.append(_parse_sdf_record(record, record_start))
            record = []
            record_start = lineno + 1
            continue
        record.append(line)
    if any(l.strip() for l in record):
        molecules.append(_parse_sdf_record(record, record_start))
    return molecules


def write_sdf(molecules: Iterable[Molecule]) -> str:
    """Debug writer; its output parses back to identical molecules."""
    out = []
    for mol in molecules:
        out.append(mol.name)
        out.append("  igt")
        out.append("")
        out.append(f"{len(mol.atoms):3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
        extra_charges = []
        for k, a in enumerate(mol.atoms):
            x, y, z = a.position
            code = _SDF_CHARGE_CODES_INV.get(a.formal_charge, 0)
            if a.formal_charge not in _SDF_CHARGE_CODES_INV or a.formal_charge == 0:
                code = 0
            if a.formal_charge != 0:
                extra_charges.append((k + 1, a.formal_charge))
            out.append(
                f"{x:10.4f}{y:10.4f}{z:10.4f} {a.element:<3} 0{code:3d}  0  0  0  0  0  0  0  0  0  0"
            )
        for i, j, order in mol.bonds:
            out.append(f"{i + 1:3d}{j + 1:3d}{_SDF_BOND_CODES_INV[order]:3d}  0")
        for p in range(0, len(extra_charges), 8):
            chunk = extra_charges[p:p + 8]
            out.append(f"M  CHG{len(chunk):3d}" + "".join(f"{i:4d}{c:4d}" for i, c in chunk))
        out.append("M  END")
        out.append("$$$$")
    return "\n".join(out) + "\n"


def read_pdb(path) -> Molecule:
    path = Path(path)
    return parse_pdb(path.read_text(), name=path.stem)


def read_sdf(path) -> list:
    return parse_sdf(Path(path).read_text())


def read_structure(path) -> list:
    """Dispatch on file suffix; PDB yields a single-element list."""
    suffix = Path(path).suffix.lower()
    if suffix in (".pdb", ".ent"):
        return [read_pdb(path)]
    if suffix in (".sdf", ".mol", ".sd"):
        return read_sdf(path)
    raise ParseError(f"unsupported structure format: {path}")


# --------------------------------------------------------------- manifest

_REQUIRED = ("id", "target_id", "receptor_path", "ligand_path", "pose_index")
_OPTIONAL = ("label", "rmsd")


def _resolve(base: Path, p: str) -> str:
    return p if os.path.isabs(p) else os.path.normpath(str(base / p))


def parse_manifest(text: str, base_dir=None) -> list:
    base = Path(base_dir) if base_dir is not None else None
    records, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"line {lineno}: invalid record ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ManifestError(f"line {lineno}: record must be a flat object")
        missing = [k for k in _REQUIRED if k not in obj]
        if missing:
            raise ManifestError(f"line {lineno}: missing required field(s) {', '.join(missing)}")
        unknown = set(obj) - set(_REQUIRED) - set(_OPTIONAL)
        if unknown:
            raise ManifestError(f"line {lineno}: unknown field(s) {', '.join(sorted(unknown))}")
        rid = str(obj["id"])
        if rid in seen:
            raise ManifestError(f"line {lineno}: duplicate id {rid!r}")
        seen.add(rid)
        rec_path, lig_path = str(obj["receptor_path"]), str(obj["ligand_path"])
        if base is not None:
            rec_path, lig_path = _resolve(base, rec_path), _resolve(base, lig_path)
        try:
            pose_index = obj["pose_index"]
            if isinstance(pose_index, bool) or not isinstance(pose_index, int):
                raise ValueError("pose_index must be an integer")
            label = obj.get("label")
            if label is not None and (isinstance(label, bool) or label not in (0, 1)):
                raise ValueError(f"label must be 0 or 1, got {label!r}")
            records.append(ExampleRecord(
                id=rid,
                target_id=str(obj["target_id"]),
                receptor_path=rec_path,
                ligand_path=lig_path,
                pose_index=pose_index,
                label=label,
                rmsd=None if obj.get("rmsd") is None else float(obj["rmsd"]),
            ))
        except (ValueError, TypeError) as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
    return records


def read_manifest(path) -> list:
    """Read a JSON-lines manifest; relative structure paths resolve against its directory."""
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)


def record_to_dict(rec: ExampleRecord, relative_to=None) -> dict:
    d = {"id": rec.id, "target_id": rec.target_id}
    for key in ("receptor_path", "ligand_path"):
        p = getattr(rec, key)
        if relative_to is not None:
            p = os.path.relpath(os.path.abspath(p), os.path.abspath(relative_to))
        d[key] = p
    d["pose_index"] = rec.pose_index
    if rec.label is not None:
        d["label"] = rec.label
    if rec.rmsd is not None:
        d["rmsd"] = rec.rmsd
    return d


def write_manifest(path, records: Iterable[ExampleRecord]) -> None:
    path = Path(path)
    base = os.path.abspath(path.parent)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec, base)) + "\n")


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
