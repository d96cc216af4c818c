from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import DATA
from igt.errors import EmptyStructureError, ManifestError, ParseError
from igt.structio import (
    Atom, ExampleRecord, Molecule, canonical_element, parse_manifest, parse_pdb, parse_sdf,
    read_manifest, read_pdb, read_sdf, write_manifest, write_pdb, write_sdf,
)

PDB_LINE = "ATOM  {:5d}  CA  ALA A   1    {:8.3f}{:8.3f}{:8.3f}  1.00  0.00           C"


def test_fixed_column_coordinates():
    mol = parse_pdb(PDB_LINE.format(1, 12.345, -0.5, 3.0))
    assert mol.atoms[0].position == (12.345, -0.5, 3.0)
    assert mol.atoms[0].element == "C"


def test_altloc_b_is_skipped():
    mol = read_pdb(DATA / "altloc.pdb")
    assert len(mol.atoms) == 2
    assert mol.atoms[1].position[0] == 12.345


def test_bundled_pdb_matches_line_count(bundled):
    text = bundled("peptide.pdb").read_text()
    mol = parse_pdb(text)
    assert len(mol.atoms) == oracles.count_pdb_heavy_atoms(text) == 30
    assert sum(a.is_hetatm for a in mol.atoms) == 1
    assert "H" not in mol.elements


@pytest.mark.parametrize("name", ["ligand_poses.sdf", "ligand_ref.sdf", "ethanol.sdf"])
def test_bundled_sdf_matches_block_counts(bundled, name):
    text = bundled(name).read_text()
    mols = parse_sdf(text)
    counts = oracles.count_sdf_blocks(text)
    assert [(len(m.atoms), len(m.bonds)) for m in mols] == counts


def test_ethanol_bonds(bundled):
    (mol,) = read_sdf(bundled("ethanol.sdf"))
    assert mol.bonds == ((0, 1, "single"), (1, 2, "single"))
    assert mol.elements == ["C", "C", "O"]


def test_counts_line_example():
    (mol,) = parse_sdf((DATA / "two_records.sdf").read_text().split("$$$$")[0] + "$$$$\n")
    assert (len(mol.atoms), len(mol.bonds)) == (3, 2)


def test_two_records():
    assert len(read_sdf(DATA / "two_records.sdf")) == 2


@pytest.mark.parametrize("name, exc, pattern", [
    ("bad_coordinate.pdb", ParseError, "line 2: malformed coordinate"),
    ("hydrogens_only.pdb", EmptyStructureError, "no heavy"),
    ("counts_too_many_atoms.sdf", ParseError, "counts line mismatch"),
    ("counts_too_few_bonds.sdf", ParseError, "counts line mismatch"),
    ("counts_too_many_bonds.sdf", ParseError, "counts line mismatch"),
    ("unknown_bond_order.sdf", ParseError, "unknown bond order code 7"),
])
def test_malformed_structures(name, exc, pattern):
    path = DATA / name
    reader = read_pdb if name.endswith(".pdb") else read_sdf
    with pytest.raises(exc, match=pattern):
        reader(path)


def test_manifest_example(tmp_path):
    line = '{"id":"a1","target_id":"T1","receptor_path":"r.pdb","ligand_path":"l.sdf","pose_index":0,"label":1}'
    (rec,) = parse_manifest(line)
    assert rec.label == 1 and rec.rmsd is None and rec.pose_index == 0


def test_manifest_empty():
    assert parse_manifest("") == []


@pytest.mark.parametrize("name, pattern", [
    ("duplicate_id.jsonl", "line 2: duplicate id"),
    ("missing_field.jsonl", "line 2: missing required field"),
])
def test_manifest_errors(name, pattern):
    with pytest.raises(ManifestError, match=pattern):
        read_manifest(DATA / name)


def test_manifest_rejects_unknown_key():
    with pytest.raises(ManifestError, match="unknown field"):
        parse_manifest('{"id":"a","target_id":"T","receptor_path":"r","ligand_path":"l","pose_index":0,"x":1}')


def test_manifest_paths_relative_to_file(tmp_path):
    sub = tmp_path / "m"
    sub.mkdir()
    recs = [ExampleRecord("a", "T", str(tmp_path / "r.pdb"), str(tmp_path / "l.sdf"), 0, 1)]
    write_manifest(sub / "x.jsonl", recs)
    assert json.loads((sub / "x.jsonl").read_text())["receptor_path"] == "../r.pdb"
    assert read_manifest(sub / "x.jsonl")[0].receptor_path == str(tmp_path / "r.pdb")


def test_record_invariants():
    with pytest.raises(ValueError):
        ExampleRecord("a", "T", "r", "l", 0, label=2)
    with pytest.raises(ValueError):
        ExampleRecord("a", "T", "r", "l", 0, rmsd=-1.0)


def test_molecule_invariants():
    a = Atom("C", (0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        Molecule((a, a), ((0, 0, "single"),), "self")
    with pytest.raises(ValueError):
        Molecule((a, a), ((0, 1, "single"), (1, 0, "double")), "dup")
    with pytest.raises(ValueError):
        Atom("C", (np.nan, 0.0, 0.0))


def test_element_canonicalization():
    assert canonical_element("CL") == "Cl"
    assert canonical_element("Zz") == "X"


def test_sdf_round_trip(bundled):
    mols = read_sdf(bundled("ligand_poses.sdf"))
    assert parse_sdf(write_sdf(mols)) == mols


def test_pdb_round_trip(bundled):
    mol = read_pdb(bundled("peptide.pdb"))
    again = parse_pdb(write_pdb(mol))
    assert again.elements == mol.elements
    np.testing.assert_allclose(again.coords, mol.coords, atol=5e-4)


_coord = st.floats(-999.0, 999.0, allow_nan=False).map(lambda x: round(x, 4))
_element = st.sampled_from(["C", "N", "O", "S", "Cl", "Br", "P", "F", "H"])


@st.composite
def molecules(draw):
    n = draw(st.integers(1, 8))
    atoms = tuple(Atom(draw(_element), (draw(_coord), draw(_coord), draw(_coord)),
                       draw(st.integers(-3, 3)), False, k) for k in range(n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=6)) if pairs else []
    bonds = tuple((i, j, draw(st.sampled_from(["single", "double", "triple"]))) for i, j in chosen)
    return Molecule(atoms, bonds, "m")


@settings(max_examples=60, deadline=None)
@given(molecules())
def test_sdf_write_parse_is_identity(mol):
    assert parse_sdf(write_sdf([mol])) == [mol]
    assert parse_sdf(write_sdf([mol])) == parse_sdf(write_sdf([mol]))
