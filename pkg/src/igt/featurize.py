"""Ligand, pocket and complex graphs with node/edge features and Laplacian PEs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import kernels
from .errors import EmptyGraphError, EmptyPocketError, NoContactError
from .structio import Atom, Molecule

ELEMENT_VOCAB = ("C", "N", "O", "S", "F", "P", "Cl", "Br", "I", "B")
CHARGE_VOCAB = (-2, -1, 0, 1, 2)
MAX_DEGREE = 5
BOND_VOCAB = ("single", "double", "triple", "aromatic", "spatial")

N_ELEMENT = len(ELEMENT_VOCAB) + 1
N_DEGREE = MAX_DEGREE + 1
N_CHARGE = len(CHARGE_VOCAB) + 1
D_NODE = N_ELEMENT + N_DEGREE + N_CHARGE + 2  # + aromatic + molecule flag

LIGAND, RECEPTOR = 1, 0
INTRA_COVALENT, INTER_SPATIAL = 0, 1

# Cordero et al. single-bond covalent radii (Å); anything missing uses the default.
COVALENT_RADII = {
    "H": 0.31, "B": 0.84, "C": 0.76, "N": 0.71, "O": 0.66, "F": 0.57, "Na": 1.66,
    "Mg": 1.41, "Si": 1.11, "P": 1.07, "S": 1.05, "Cl": 1.02, "K": 2.03, "Ca": 1.76,
    "Mn": 1.39, "Fe": 1.32, "Co": 1.26, "Ni": 1.24, "Cu": 1.32, "Zn": 1.22,
    "Se": 1.20, "Br": 1.20, "I": 1.39,
}
DEFAULT_COVALENT_RADIUS = 1.50
BOND_TOLERANCE = 1.3
ZERO_EIGENVALUE = 1e-8


@dataclass
class FeatureConfig:
    pocket_cutoff: float = 8.0
    inter_cutoff: float = 5.0
    rbf_centers: int = 8
    rbf_sigma: float = 0.7
    k_pe: int = 8
    atom_symbol_only: bool = False
    drop_inter_distance: bool = False
    inter_distance_only: bool = False
    drop_complex_intra_edge_features: bool = False
    keep_hetatm: bool = True
    exclude_resnames: tuple = ()

    def __post_init__(self):
        if self.pocket_cutoff <= 0 or self.inter_cutoff <= 0:
            raise ValueError("cutoffs must be positive")
        if self.k_pe < 1:
            raise ValueError("k_pe must be >= 1")
        if self.rbf_centers < 1 or self.rbf_sigma <= 0:
            raise ValueError("rbf_centers must be >= 1 and rbf_sigma > 0")
        self.exclude_resnames = tuple(self.exclude_resnames)

    @property
    def d_edge(self) -> int:
        return len(BOND_VOCAB) + 1 + self.rbf_centers

    @property
    def rbf_mu(self) -> np.ndarray:
        return np.linspace(0.0, self.inter_cutoff, self.rbf_centers)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["exclude_resnames"] = list(self.exclude_resnames)
        return d


@dataclass
class MolGraph:
    n_nodes: int
    node_feat: np.ndarray
    edges: np.ndarray
    edge_feat: np.ndarray
    pos_enc: np.ndarray
    coords: np.ndarray
    pe_eigvals: Optional[np.ndarray] = None

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass
class ComplexGraph:
    graph: MolGraph
    molecule_of: np.ndarray
    edge_kind: np.ndarray
    lig_map: np.ndarray
    rec_map: np.ndarray

    @property
    def n_ligand(self) -> int:
        return int(np.sum(self.molecule_of == LIGAND))

    @property
    def n_receptor(self) -> int:
        return int(np.sum(self.molecule_of == RECEPTOR))


# ------------------------------------------------------------------ features


def node_features(atom: Atom, molecule_tag: int, degree: int, cfg: FeatureConfig) -> np.ndarray:
    v = np.zeros(D_NODE)
    try:
        v[ELEMENT_VOCAB.index(atom.element)] = 1.0
    except ValueError:
        v[N_ELEMENT - 1] = 1.0
    off = N_ELEMENT
    if not cfg.atom_symbol_only:
        v[off + min(max(degree, 0), MAX_DEGREE)] = 1.0
        charge = atom.formal_charge
        v[off + N_DEGREE + (CHARGE_VOCAB.index(charge) if charge in CHARGE_VOCAB else N_CHARGE - 1)] = 1.0
        v[off + N_DEGREE + N_CHARGE] = float(atom.is_aromatic)
    v[D_NODE - 1] = 1.0 if molecule_tag == LIGAND else 0.0
    return v


def rbf(d, cfg: FeatureConfig) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return np.exp(-((d[..., None] - cfg.rbf_mu) ** 2) / (2.0 * cfg.rbf_sigma ** 2))


def edge_features(d: float, bond: str, is_inter: bool, cfg: FeatureConfig) -> np.ndarray:
    """Feature vector of one edge: bond one-hot, inter flag, distance RBF."""
    if not d > 0:
        raise ValueError(f"edge length must be positive, got {d}")
    return _edge_feature_rows(np.array([d]), [bond], np.array([is_inter]), cfg)[0]


def _edge_feature_rows(d: np.ndarray, bonds, inter: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    n = len(d)
    out = np.zeros((n, cfg.d_edge))
    nb = len(BOND_VOCAB)
    for k, b in enumerate(bonds):
        out[k, BOND_VOCAB.index(b)] = 1.0
    inter = np.asarray(inter, dtype=bool)
    out[:, nb] = inter
    out[:, nb + 1:] = rbf(d, cfg) if n else np.zeros((0, cfg.rbf_centers))
    if cfg.drop_inter_distance:
        out[inter, nb + 1:] = 0.0
    if cfg.inter_distance_only:
        out[:, :nb] = 0.0
    return out


# ------------------------------------------------------------------- bonding


def covalent_radius(element: str) -> float:
    return COVALENT_RADII.get(element, DEFAULT_COVALENT_RADIUS)


def infer_receptor_bonds(mol: Molecule) -> tuple:
    """Single bonds between heavy atoms closer than 1.3x their summed covalent radii."""
    coords = mol.coords
    n = len(coords)
    if n < 2:
        return ()
    radii = np.array([covalent_radius(e) for e in mol.elements])
    max_cut = BOND_TOLERANCE * 2.0 * radii.max()
    pairs = kernels.pairs_within(coords, coords, max_cut)
    pairs = pairs[pairs[:, 0] < pairs[:, 1]]
    if len(pairs) == 0:
        return ()
    i, j = pairs[:, 0], pairs[:, 1]
    diff = coords[i] - coords[j]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    keep = dist <= BOND_TOLERANCE * (radii[i] + radii[j])
    return tuple((int(a), int(b), "single") for a, b in zip(i[keep], j[keep]))


def extract_pocket(receptor: Molecule, ligand: Molecule, cfg: FeatureConfig) -> Molecule:
    """Receptor heavy atoms within ``pocket_cutoff`` of any ligand heavy atom, with inferred bonds."""
    ligand = ligand.heavy()
    candidates = [
        k for k, a in enumerate(receptor.atoms)
        if a.element != "H"
        and (cfg.keep_hetatm or not a.is_hetatm)
        and a.residue_name not in cfg.exclude_resnames
    ]
    if candidates and len(ligand.atoms):
        rc = receptor.coords[candidates]
        mask = kernels.min_dist_within(rc, ligand.coords, cfg.pocket_cutoff)
        keep = [candidates[k] for k in np.nonzero(mask)[0]]
    else:
        keep = []
    if not keep:
        raise EmptyPocketError(
            f"no receptor atom within {cfg.pocket_cutoff} Å of the ligand (mis-docked pose or wrong frame?)"
        )
    atoms = tuple(receptor.atoms[k] for k in keep)
    pocket = Molecule(atoms, (), receptor.name)
    return Molecule(atoms, infer_receptor_bonds(pocket), receptor.name)


# ---------------------------------------------------------- positional enc.


def normalized_laplacian(n_nodes: int, edges: np.ndarray) -> np.ndarray:
    """I - D^-1/2 A D^-1/2 on the unweighted graph; isolated nodes keep an identity row."""
    A = np.zeros((n_nodes, n_nodes))
    if len(edges):
        A[edges[:, 0], edges[:, 1]] = 1.0
        A[edges[:, 1], edges[:, 0]] = 1.0
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    inv_sqrt = np.zeros(n_nodes)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(n_nodes) - inv_sqrt[:, None] * A * inv_sqrt[None, :]


def canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (lowest index on ties)."""
    out = vecs.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        if not np.any(col):
            continue
        if col[int(np.argmax(np.abs(col)))] < 0:
            out[:, c] = -col
    return out


def random_signs(vecs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    flips = np.where(rng.random(vecs.shape[1]) < 0.5, -1.0, 1.0)
    return vecs * flips[None, :]


def laplacian_eigenpairs(n_nodes: int, edges: np.ndarray, k_pe: int):
    """Eigenpairs for the ``k_pe`` smallest nonzero eigenvalues, zero-padded.

    Returns ``(eigvals[k_pe], vecs[n_nodes, k_pe], L)``; padded slots have
    eigenvalue 0 and an all-zero column.
    """
    L = normalized_laplacian(n_nodes, edges)
    vals = np.zeros(k_pe)
    vecs = np.zeros((n_nodes, k_pe))
    if n_nodes == 0:
        return vals, vecs, L
    w, V, _ = kernels.jacobi_eigh(L, 1e-10, 100)
    order = np.argsort(w, kind="stable")
    order = [k for k in order if w[k] > ZERO_EIGENVALUE][:k_pe]
    m = len(order)
    vals[:m] = w[order]
    vecs[:, :m] = V[:, order]
    return vals, vecs, L


def laplacian_pe(graph: MolGraph, k_pe: Optional[int] = None, sign_mode: str = "canonical",
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    k_pe = graph.pos_enc.shape[1] if k_pe is None else k_pe
    _, vecs, _ = laplacian_eigenpairs(graph.n_nodes, graph.edges, k_pe)
    return apply_sign_mode(vecs, sign_mode, rng)


def apply_sign_mode(vecs: np.ndarray, sign_mode: str, rng=None) -> np.ndarray:
    if sign_mode == "canonical":
        return canonical_signs(vecs)
    if sign_mode == "random":
        if rng is None:
            raise ValueError("random sign mode needs a generator")
        return random_signs(canonical_signs(vecs), rng)
    raise ValueError(f"unknown sign mode {sign_mode!r}")


# ---------------------------------------------------------------- graphs


def _degrees(n: int, bonds) -> np.ndarray:
    deg = np.zeros(n, dtype=int)
    for i, j, _ in bonds:
        deg[i] += 1
        deg[j] += 1
    return deg


def _covalent_edges(mol: Molecule, offset: int = 0):
    src, dst, orders = [], [], []
    for i, j, order in mol.bonds:
        src += [i + offset, j + offset]
        dst += [j + offset, i + offset]
        orders += [order, order]
    return src, dst, orders


def _edge_lengths(coords: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.zeros(0)
    diff = coords[edges[:, 0]] - coords[edges[:, 1]]
    return np.sqrt(np.sum(diff * diff, axis=1))


def _node_matrix(mol: Molecule, tag: int, cfg: FeatureConfig) -> np.ndarray:
    deg = _degrees(len(mol.atoms), mol.bonds)
    if not len(mol.atoms):
        return np.zeros((0, D_NODE))
    return np.stack([node_features(a, tag, int(deg[k]), cfg) for k, a in enumerate(mol.atoms)])


def _assemble(node_feat, coords, src, dst, bonds, inter, cfg) -> MolGraph:
    edges = np.array([src, dst], dtype=np.int64).T.reshape(-1, 2)
    d = _edge_lengths(coords, edges)
    if np.any(d <= 0):
        raise EmptyGraphError("coincident atoms produce a zero-length edge")
    edge_feat = _edge_feature_rows(d, bonds, np.asarray(inter, dtype=bool), cfg)
    n = len(node_feat)
    vals, vecs, _ = laplacian_eigenpairs(n, edges, cfg.k_pe)
    return MolGraph(n, node_feat, edges, edge_feat, canonical_signs(vecs), coords, vals)


def molecule_graph(mol: Molecule, tag: int, cfg: FeatureConfig) -> MolGraph:
    if not len(mol.atoms):
        raise EmptyGraphError(f"{'ligand' if tag == LIGAND else 'receptor'} graph has no atoms")
    src, dst, orders = _covalent_edges(mol)
    return _assemble(_node_matrix(mol, tag, cfg), mol.coords, src, dst, orders,
                     [False] * len(src), cfg)


def build_graphs(pocket: Molecule, ligand: Molecule, cfg: FeatureConfig):
    """Return ``(ligand MolGraph, receptor MolGraph, ComplexGraph)``.

    ``pocket`` and ``ligand`` must already be heavy-atom only; complex nodes
    are the ligand atoms followed by the pocket atoms.
    """
    lig_g = molecule_graph(ligand, LIGAND, cfg)
    rec_g = molecule_graph(pocket, RECEPTOR, cfg)
    nl, nr = lig_g.n_nodes, rec_g.n_nodes

    lsrc, ldst, lord = _covalent_edges(ligand)
    rsrc, rdst, rord = _covalent_edges(pocket, offset=nl)
    pairs = kernels.pairs_within(ligand.coords, pocket.coords, cfg.inter_cutoff)
    if len(pairs) == 0:
        raise NoContactError(f"no ligand-receptor atom pair within {cfg.inter_cutoff} Å")
    isrc, idst = [], []
    for i, j in pairs:
        isrc += [int(i), int(j) + nl]
        idst += [int(j) + nl, int(i)]
    src = lsrc + rsrc + isrc
    dst = ldst + rdst + idst
    orders = lord + rord + ["spatial"] * len(isrc)
    n_intra = len(lsrc) + len(rsrc)
    inter = [False] * n_intra + [True] * len(isrc)

    coords = np.concatenate([ligand.coords, pocket.coords])
    node_feat = np.concatenate([lig_g.node_feat, rec_g.node_feat])
    cg = _assemble(node_feat, coords, src, dst, orders, inter, cfg)
    if cfg.drop_complex_intra_edge_features:
        cg.edge_feat[:n_intra] = 0.0
    molecule_of = np.array([LIGAND] * nl + [RECEPTOR] * nr)
    edge_kind = np.array([INTRA_COVALENT] * n_intra + [INTER_SPATIAL] * len(isrc))
    lig_map = np.where(molecule_of == LIGAND, np.arange(nl + nr), -1)
    rec_map = np.where(molecule_of == RECEPTOR, np.arange(nl + nr) - nl, -1)
    return lig_g, rec_g, ComplexGraph(cg, molecule_of, edge_kind, lig_map, rec_map)


# -------------------------------------------------------- canonical order


def canonical_atom_order(mol: Molecule, reference: np.ndarray) -> list:
    """Input-order-independent atom ordering from element and rigid-invariant geometry.

    ``reference`` holds every coordinate of the complex. Sorting keys are
    computed with exactly-rounded sums so they do not depend on how the
    atoms were listed; only geometrically equivalent atoms can tie.
    """
    centroid = np.array([math.fsum(reference[:, a]) / len(reference) for a in range(3)])
    coords = mol.coords
    diff = coords - centroid
    r2 = [math.fsum(row) for row in diff * diff]
    spread = []
    for x in coords:
        dd = reference - x
        spread.append(math.fsum(np.sqrt(np.sum(dd * dd, axis=1))))
    el = [a.element for a in mol.atoms]
    charge = [a.formal_charge for a in mol.atoms]
    keys = sorted(range(len(mol.atoms)), key=lambda k: (el[k], charge[k], r2[k], spread[k], k))
    return keys


def featurize_complex(receptor: Molecule, ligand: Molecule, cfg: FeatureConfig,
                      canonical_order: bool = True):
    """Pocket extraction, optional canonical relabeling, then :func:`build_graphs`."""
    ligand = ligand.heavy()
    if not len(ligand.atoms):
        raise EmptyGraphError("ligand has no heavy atoms")
    pocket = extract_pocket(receptor, ligand, cfg)
    if canonical_order:
        ref = np.concatenate([ligand.coords, pocket.coords])
        ligand = ligand.permuted(canonical_atom_order(ligand, ref))
        pocket = pocket.permuted(canonical_atom_order(pocket, ref))
    return build_graphs(pocket, ligand, cfg)
