from __future__ import annotations

import math

import numpy as np
import pytest

from igt.errors import EmptyPocketError, NoContactError
from igt.featurize import (
    D_NODE, LIGAND, RECEPTOR, FeatureConfig, apply_sign_mode, build_graphs, canonical_signs,
    edge_features, extract_pocket, featurize_complex, infer_receptor_bonds, laplacian_eigenpairs,
    node_features, normalized_laplacian, rbf,
)
from igt.structio import Atom, Molecule, read_pdb, read_sdf


@pytest.fixture(scope="module")
def complex_parts(bundled, feat_cfg):
    receptor = read_pdb(bundled("peptide.pdb"))
    ligand = read_sdf(bundled("ligand_poses.sdf"))[0].heavy()
    return receptor, ligand, extract_pocket(receptor, ligand, feat_cfg)


def test_node_feature_layout(feat_cfg):
    v = node_features(Atom("N", (0, 0, 0), formal_charge=1, is_aromatic=True), LIGAND, 3, feat_cfg)
    assert v.shape == (D_NODE,) == (25,)
    assert v[1] == 1 and v[11 + 3] == 1 and v[17 + 3] == 1 and v[23] == 1 and v[24] == 1
    assert v.sum() == 5


def test_atom_symbol_only_keeps_element():
    cfg = FeatureConfig(atom_symbol_only=True)
    v = node_features(Atom("N", (0, 0, 0), formal_charge=-1, is_aromatic=True), RECEPTOR, 2, cfg)
    assert np.count_nonzero(v) == 1 and v[1] == 1


def test_unknown_element_goes_to_other(feat_cfg):
    v = node_features(Atom("X", (0, 0, 0)), RECEPTOR, 9, feat_cfg)
    assert v[10] == 1 and v[11 + 5] == 1


def test_rbf_values(feat_cfg):
    mu = np.linspace(0, 5.0, 8)
    d = 2.2
    want = [math.exp(-(d - m) ** 2 / (2 * 0.7 ** 2)) for m in mu]
    np.testing.assert_allclose(rbf(d, feat_cfg), want, rtol=0, atol=1e-15)


def test_edge_feature_flags():
    base = FeatureConfig()
    e = edge_features(3.0, "spatial", True, base)
    assert e.shape == (14,) and e[4] == 1 and e[5] == 1
    e2 = edge_features(3.0, "spatial", True, FeatureConfig(drop_inter_distance=True))
    assert not e2[6:].any() and e2[4] == 1
    e3 = edge_features(1.5, "double", False, FeatureConfig(inter_distance_only=True))
    assert not e3[:5].any()
    np.testing.assert_array_equal(e3[6:], e[6:] * 0 + rbf(1.5, base))


def test_pocket_is_brute_force_selection(complex_parts, feat_cfg):
    receptor, ligand, pocket = complex_parts
    want = [a for a in receptor.atoms
            if min(math.dist(a.position, b.position) for b in ligand.atoms) <= feat_cfg.pocket_cutoff]
    assert list(pocket.atoms) == want


def test_pocket_hetatm_policy(complex_parts):
    receptor, ligand, _ = complex_parts
    keep = extract_pocket(receptor, ligand, FeatureConfig())
    drop = extract_pocket(receptor, ligand, FeatureConfig(keep_hetatm=False))
    excl = extract_pocket(receptor, ligand, FeatureConfig(exclude_resnames=("HOH",)))
    assert len(keep.atoms) - 1 == len(drop.atoms) == len(excl.atoms)


def test_empty_pocket():
    far = Molecule((Atom("C", (100.0, 0.0, 0.0)),), (), "far")
    lig = Molecule((Atom("C", (0.0, 0.0, 0.0)),), (), "lig")
    with pytest.raises(EmptyPocketError):
        extract_pocket(far, lig, FeatureConfig())


def test_no_contact():
    rec = Molecule((Atom("C", (6.0, 0.0, 0.0)),), (), "rec")
    lig = Molecule((Atom("C", (0.0, 0.0, 0.0)),), (), "lig")
    with pytest.raises(NoContactError):
        build_graphs(rec, lig, FeatureConfig())


def test_inferred_bonds_by_radius(bundled):
    mol = read_pdb(bundled("peptide.pdb"))
    bonds = infer_receptor_bonds(mol)
    assert len(bonds) == 28
    for i, j, order in bonds:
        assert order == "single"
        assert math.dist(mol.atoms[i].position, mol.atoms[j].position) < 2.4


def test_complex_edges_brute_force(complex_parts, feat_cfg):
    _, ligand, pocket = complex_parts
    lig_g, rec_g, cg = build_graphs(pocket, ligand, feat_cfg)
    nl = lig_g.n_nodes
    inter = {tuple(e) for e, k in zip(cg.graph.edges, cg.edge_kind) if k == 1}
    want = set()
    for i, a in enumerate(ligand.atoms):
        for j, b in enumerate(pocket.atoms):
            if math.dist(a.position, b.position) <= feat_cfg.inter_cutoff:
                want |= {(i, j + nl), (j + nl, i)}
    assert inter == want
    assert cg.graph.n_edges == lig_g.n_edges + rec_g.n_edges + len(want)
    assert list(cg.molecule_of[:nl]) == [LIGAND] * nl
    assert (cg.lig_map[:nl] == np.arange(nl)).all() and (cg.rec_map[nl:] == np.arange(rec_g.n_nodes)).all()


def test_drop_complex_intra_edges(complex_parts):
    _, ligand, pocket = complex_parts
    _, rec_g, cg = build_graphs(pocket, ligand, FeatureConfig(drop_complex_intra_edge_features=True))
    assert not cg.graph.edge_feat[cg.edge_kind == 0].any()
    assert cg.graph.edge_feat[cg.edge_kind == 1].any()
    assert rec_g.edge_feat.any()


def test_k2_laplacian():
    vals, vecs, L = laplacian_eigenpairs(2, np.array([[0, 1], [1, 0]]), 4)
    np.testing.assert_allclose(np.linalg.eigvalsh(L), [0.0, 2.0], atol=1e-10)
    assert vals[0] == pytest.approx(2.0, abs=1e-10) and not vecs[:, 1:].any()


def test_pe_residual_and_dense_oracle(complex_parts, feat_cfg):
    _, ligand, pocket = complex_parts
    _, _, cg = build_graphs(pocket, ligand, feat_cfg)
    g = cg.graph
    vals, vecs, L = laplacian_eigenpairs(g.n_nodes, g.edges, 8)
    dense = np.linalg.eigvalsh(L)
    np.testing.assert_allclose(vals, dense[dense > 1e-8][:8], atol=1e-10)
    assert np.max(np.abs(L @ vecs - vecs * vals)) < 1e-8


def test_isolated_nodes_identity_rows():
    L = normalized_laplacian(3, np.array([[0, 1], [1, 0]]))
    assert L[2, 2] == 1.0 and not L[2, :2].any()


def test_canonical_signs():
    v = np.array([[0.2, -0.5], [-0.9, 0.5], [0.1, 0.0]])
    c = canonical_signs(v)
    assert c[1, 0] == 0.9 and c[0, 1] == 0.5
    np.testing.assert_array_equal(canonical_signs(-v), c)


def test_random_signs_only_flip_columns():
    v = np.random.default_rng(0).normal(size=(6, 4))
    r = apply_sign_mode(v, "random", np.random.default_rng(1))
    np.testing.assert_allclose(np.abs(r), np.abs(v))
    assert all(np.allclose(r[:, c], v[:, c]) or np.allclose(r[:, c], -v[:, c]) for c in range(4))


def test_build_graphs_permutation_equivariant(complex_parts, feat_cfg):
    _, ligand, pocket = complex_parts
    perm = list(np.random.default_rng(5).permutation(len(ligand.atoms)))
    a, _, _ = build_graphs(pocket, ligand, feat_cfg)
    b, _, _ = build_graphs(pocket, ligand.permuted(perm), feat_cfg)
    np.testing.assert_array_equal(b.node_feat, a.node_feat[perm])
    # new node k is old node perm[k]
    old = np.asarray(perm)
    assert {tuple(e) for e in old[b.edges]} == {tuple(e) for e in a.edges}


def test_featurize_complex_order_independent(complex_parts, feat_cfg):
    receptor, ligand, _ = complex_parts
    perm = list(np.random.default_rng(9).permutation(len(ligand.atoms)))
    a = featurize_complex(receptor, ligand, feat_cfg)[2].graph
    b = featurize_complex(receptor, ligand.permuted(perm), feat_cfg)[2].graph
    np.testing.assert_array_equal(a.node_feat, b.node_feat)
    np.testing.assert_array_equal(a.edges, b.edges)
    np.testing.assert_array_equal(a.pos_enc, b.pos_enc)
