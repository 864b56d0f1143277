"""
Transverse-field Ising model on ring, chain and heavy-hex lattices.

H = -J sum_<a,b> Z_a Z_b - h sum_a X_a. One first-order Trotter step applies
RX(2 h tau) on every site followed by RZZ(2 J tau) on every edge, the edges
grouped into colour layers. K steps approximate exp(iHt) at t = K tau, and
the reference quantity is the single-site magnetization
M(t) = <0| exp(-iHt) Z_site exp(iHt) |0>.

Usage:

.. code-block:: python

    from evcdr.ising import build_lattice, IsingModel, TrotterPlan, trotter_circuit

    model = IsingModel(build_lattice("heavy_hex", 2), j_coupling=4.0, h_field=2.0)
    circuit = trotter_circuit(model, TrotterPlan(steps=10, tau=1 / 20, measured_site=0))
"""

# pylint: disable=C0103,R0913,R0914,C0301
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple
import logging
import math
import os
import threading
import numpy as np
import networkx as nx
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from evcdr.circuit import Circuit, GateOp
from evcdr.pauli import PauliString
from evcdr.statevector import Statevector, expectation

logger = logging.getLogger(__name__)

THREAD_LOCK = threading.Lock()
LATTICE_CACHE: Dict[Tuple[str, int], nx.Graph] = {}
MAX_EXACT_QUBITS = int(os.getenv("EVCDR_MAX_DENSE_QUBITS", "24"))
DENSE_EXPM_QUBITS = 10
LATTICE_KINDS = ("ring", "chain", "heavy_hex")


@dataclass(frozen=True)
class SpinLattice:
    """Undirected simple graph of spin sites labelled 0..n-1."""

    kind: str
    size: int
    graph: nx.Graph

    @property
    def n_nodes(self) -> int:
        """Number of sites."""
        return self.graph.number_of_nodes()

    @property
    def edges(self) -> List[Tuple[int, int]]:
        """Sorted edge list with a < b."""
        return sorted(tuple(sorted(edge)) for edge in self.graph.edges())

    def neighbors(self, site: int) -> List[int]:
        """Sorted lattice neighbours of site."""
        return sorted(self.graph.neighbors(site))

    def edge_layers(self) -> List[List[Tuple[int, int]]]:
        """
        Edges grouped into layers of disjoint edges by greedy edge colouring.

        Rings get two layers (three when odd); greedy colouring never needs
        more than max degree + 1 layers.
        """
        if self.graph.number_of_edges() == 0:
            return []
        line = nx.line_graph(self.graph)
        ordered = nx.Graph()
        ordered.add_nodes_from(sorted(tuple(sorted(e)) for e in line.nodes()))
        ordered.add_edges_from(
            (tuple(sorted(a)), tuple(sorted(b))) for a, b in line.edges()
        )
        colours = nx.coloring.greedy_color(ordered, strategy="largest_first")
        layers: Dict[int, List[Tuple[int, int]]] = {}
        for edge, colour in colours.items():
            layers.setdefault(colour, []).append(edge)
        return [sorted(layers[c]) for c in sorted(layers)]

    def restrict(self, sites: Iterable[int]) -> Tuple["SpinLattice", Dict[int, int]]:
        """Induced sub-lattice on sites, relabelled 0..m-1 in sorted order, with the label map."""
        mapping = {site: index for index, site in enumerate(sorted(sites))}
        graph = nx.relabel_nodes(self.graph.subgraph(mapping).copy(), mapping)
        graph.add_nodes_from(range(len(mapping)))
        return SpinLattice(self.kind, self.size, graph), mapping


def _hexagon_corners(q: int, r: int) -> List[Tuple[float, float]]:
    cx = math.sqrt(3) * (q + r / 2)
    cy = 1.5 * r
    corners = []
    for k in range(6):
        angle = math.radians(60 * k + 30)
        corners.append((round(cx + math.cos(angle), 6), round(cy + math.sin(angle), 6)))
    return corners


def _heavy_hex_graph(cells: int) -> nx.Graph:
    """Heavy-hex graph of `cells` hexagons, two per row, sharing edges."""
    honeycomb = nx.Graph()
    for c in range(cells):
        corners = _hexagon_corners(c % 2, c // 2)
        for k in range(6):
            honeycomb.add_edge(corners[k], corners[(k + 1) % 6])
    heavy = nx.Graph()
    for a, b in honeycomb.edges():
        middle = (round((a[0] + b[0]) / 2, 6), round((a[1] + b[1]) / 2, 6))
        heavy.add_edge(a, middle)
        heavy.add_edge(middle, b)
    order = sorted(heavy.nodes(), key=lambda point: (point[1], point[0]))
    return nx.relabel_nodes(heavy, {point: index for index, point in enumerate(order)})


def build_lattice(kind: str, size: int) -> SpinLattice:
    """
    Build a named lattice.

    Args:
        kind:   "ring" (size sites in a cycle), "chain" (open line of size sites)
                or "heavy_hex" (size fused hexagonal cells, 12 sites per hexagon).
        size:   Number of sites (ring, chain) or cells (heavy_hex).
    Returns:
        A SpinLattice with sites labelled 0..n-1.
    Raises:
        ValueError:  If the kind is unknown or the size too small.

    Example:

    .. code-block:: python

        build_lattice("heavy_hex", 4).n_nodes   # 35
    """
    if kind not in LATTICE_KINDS:
        raise ValueError(f"Unsupported lattice kind '{kind}'. Use one of {LATTICE_KINDS}.")
    minimum = {"ring": 3, "chain": 1, "heavy_hex": 1}[kind]
    if int(size) != size or size < minimum:
        raise ValueError(f"Lattice {kind} needs an integer size >= {minimum}, got {size}.")
    key = (kind, int(size))
    with THREAD_LOCK:
        if key not in LATTICE_CACHE:
            if kind == "ring":
                graph = nx.cycle_graph(size)
            elif kind == "chain":
                graph = nx.path_graph(size)
            else:
                graph = _heavy_hex_graph(size)
            LATTICE_CACHE[key] = graph
        graph = LATTICE_CACHE[key]
    return SpinLattice(kind, int(size), graph.copy())


def save_lattice(lattice: SpinLattice, path: str):
    """Write the lattice as an edge-list text file with a kind/size header."""
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(f"# kind={lattice.kind} size={lattice.size} nodes={lattice.n_nodes}\n")
        for line in nx.generate_edgelist(nx.Graph(lattice.edges), data=False):
            fp.write(line + "\n")


def load_lattice(path: str) -> SpinLattice:
    """Read a lattice written by save_lattice."""
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline()
    fields = dict(item.split("=", 1) for item in header.lstrip("#").split())
    if "kind" not in fields or "nodes" not in fields:
        raise ValueError(f"File {path} is not a saved lattice.")
    graph = nx.read_edgelist(path, nodetype=int, comments="#")
    graph.add_nodes_from(range(int(fields["nodes"])))
    return SpinLattice(fields["kind"], int(fields.get("size", 0)), graph)


@dataclass(frozen=True)
class IsingModel:
    """Ising couplings on a lattice (energy units)."""

    lattice: SpinLattice
    j_coupling: float
    h_field: float

    def __post_init__(self):
        if not (math.isfinite(self.j_coupling) and math.isfinite(self.h_field)):
            raise ValueError("Ising couplings must be finite.")


@dataclass(frozen=True)
class TrotterPlan:
    """K steps of size tau measuring Z on measured_site."""

    steps: int
    tau: float
    measured_site: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"Number of Trotter steps must be >= 0, got {self.steps}.")
        if not math.isfinite(self.tau):
            raise ValueError("Trotter step size must be finite.")

    @property
    def t(self) -> float:
        """Total evolution time K tau."""
        return self.steps * self.tau


def trotter_step(model: IsingModel, tau: float, param_offset: int = 0) -> Circuit:
    """
    One first-order Trotter step as a circuit.

    Every rotation gets its own parameter index starting at param_offset.
    """
    lattice = model.lattice
    circuit = Circuit(lattice.n_nodes)
    index = param_offset
    for site in range(lattice.n_nodes):
        circuit.append(GateOp("RX", (site,), angle=2 * model.h_field * tau, param_index=index))
        index += 1
    for layer in lattice.edge_layers():
        for a, b in layer:
            circuit.append(GateOp("RZZ", (a, b), angle=2 * model.j_coupling * tau, param_index=index))
            index += 1
    return circuit


def trotter_circuit(model: IsingModel, plan: TrotterPlan) -> Circuit:
    """K repetitions of trotter_step with globally unique parameter indices."""
    circuit = Circuit(model.lattice.n_nodes)
    for _ in range(plan.steps):
        circuit.extend(trotter_step(model, plan.tau, param_offset=len(circuit.gates)).gates)
    return circuit


def lightcone_sizes(model: IsingModel, tau: float, site: int, max_steps: int) -> List[int]:
    """Support size of the backward light cone of Z_site for K = 0..max_steps."""
    sizes = []
    for steps in range(max_steps + 1):
        circuit = trotter_circuit(model, TrotterPlan(steps, tau, site))
        _, support = circuit.lightcone([site])
        sizes.append(len(support))
    return sizes


def trotter_magnetization(model: IsingModel, plan: TrotterPlan) -> float:
    """Noiseless <Z_site> after the Trotter circuit, simulated on the light-cone qubits only."""
    circuit = trotter_circuit(model, plan)
    kept, support = circuit.lightcone([plan.measured_site])
    if len(support) > MAX_EXACT_QUBITS:
        raise ValueError(
            f"Light cone of {len(support)} qubits is too large for dense simulation."
        )
    mapping = {q: i for i, q in enumerate(support)}
    reduced = Circuit(len(support), [circuit.gates[p].relabel(mapping) for p in kept])
    state = Statevector.zero(len(support)).evolve(reduced)
    return expectation(state, PauliString.single(len(support), mapping[plan.measured_site], "Z"))


def sparse_hamiltonian(model: IsingModel) -> scipy.sparse.csr_matrix:
    """H = -J sum ZZ - h sum X as a sparse matrix in the little-endian basis."""
    n = model.lattice.n_nodes
    dimension = 1 << n
    indices = np.arange(dimension)
    diagonal = np.zeros(dimension)
    for a, b in model.lattice.edges:
        za = 1 - 2 * ((indices >> a) & 1)
        zb = 1 - 2 * ((indices >> b) & 1)
        diagonal -= model.j_coupling * za * zb
    hamiltonian = scipy.sparse.diags(diagonal).tocsr()
    for site in range(n):
        flip = scipy.sparse.csr_matrix(
            (np.full(dimension, -model.h_field), (indices ^ (1 << site), indices)),
            shape=(dimension, dimension),
        )
        hamiltonian = hamiltonian + flip
    return hamiltonian


def exact_magnetization(model: IsingModel, t: float, site: int, steps: Optional[int] = None) -> float:
    """
    Continuous-time magnetization M(t) = <0| e^{-iHt} Z_site e^{iHt} |0>.

    With steps given, the Hamiltonian is first restricted to the sites in the
    backward light cone of Z_site under the K-step Trotter circuit, which
    keeps references on lattices above the dense limit feasible while the
    light cone is small. Supports up to DENSE_EXPM_QUBITS sites use a dense
    matrix exponential, larger ones the sparse Krylov action of the
    exponential.

    Args:
        model:  Ising model.
        t:      Evolution time.
        site:   Measured site.
        steps:  Trotter step count K bounding the light cone (default: whole lattice).
    Returns:
        M(t) in [-1, 1].
    Raises:
        ValueError:  If the (reduced) lattice is too large or the site is invalid.
    """
    n = model.lattice.n_nodes
    if not 0 <= site < n:
        raise ValueError(f"Site {site} is not on the {n}-site lattice.")
    if t == 0:
        return 1.0
    if steps is not None:
        circuit = trotter_circuit(model, TrotterPlan(steps, t / max(steps, 1), site))
        _, support = circuit.lightcone([site])
        if len(support) < n:
            lattice, mapping = model.lattice.restrict(support)
            model = IsingModel(lattice, model.j_coupling, model.h_field)
            site, n = mapping[site], lattice.n_nodes
            logger.debug("Exact reference restricted to %d light-cone sites", n)
    if n > MAX_EXACT_QUBITS:
        raise ValueError(f"{n} sites are too many for exact evolution (limit {MAX_EXACT_QUBITS}).")
    hamiltonian = sparse_hamiltonian(model)
    start = np.zeros(1 << n, dtype=complex)
    start[0] = 1.0
    if n <= DENSE_EXPM_QUBITS:
        psi = scipy.linalg.expm(1j * t * hamiltonian.toarray()) @ start
    else:
        psi = scipy.sparse.linalg.expm_multiply(1j * t * hamiltonian.tocsc(), start)
    psi = psi / np.linalg.norm(psi)
    return expectation(Statevector(psi, n), PauliString.single(n, site, "Z"))


def trotter_steps_for(t: float, tau: float) -> int:
    """Number of steps K with K tau = t."""
    if tau <= 0:
        raise ValueError(f"Trotter step size must be positive, got {tau}.")
    steps = int(round(t / tau))
    if abs(steps * tau - t) > 1e-9:
        raise ValueError(f"Time {t} is not a whole number of steps of size {tau}.")
    return steps


def trotter_error(model: IsingModel, t: float, site: int, tau: float) -> float:
    """|M_trotter(t; tau) - M_exact(t)|."""
    plan = TrotterPlan(trotter_steps_for(t, tau), tau, site)
    return abs(trotter_magnetization(model, plan) - exact_magnetization(model, t, site))


def richardson(model: IsingModel, t: float, site: int, tau: float) -> float:
    """Second-order Richardson extrapolation (4 M(tau/2) - M(tau)) / 3 of the Trotter value."""
    coarse = trotter_magnetization(model, TrotterPlan(trotter_steps_for(t, tau), tau, site))
    fine = trotter_magnetization(model, TrotterPlan(trotter_steps_for(t, tau / 2), tau / 2, site))
    return (4 * fine - coarse) / 3
