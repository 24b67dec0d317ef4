"""Address correspondence networks: heuristic co-detection graphs, seeded label
propagation, and clustering evaluation against ground-truth entities."""

from .chain import ChainView, GroundTruth, Transaction, TxInput, TxOutput, load_ground_truth, load_transactions
from .heuristics import HeuristicConfig, HeuristicId, build_context, detect_all, detect_pairs
from .lpa import Clustering, run_lpa, seeded_lpa, select_seeds
from .metrics import MetricsReport, ami, ari, contingency, homogeneity, metrics_report, modularity
from .network import CorrespondenceNetwork, build_network
from .sampling import SampleResult, TimeWindow, make_windows, snowball_sample
from .synthgen import GeneratorConfig, generate_chain

__version__ = "0.1.0"
