"""HNSW graphs with reference-angle routing tests."""

from .hnsw import HnswGraph, HnswParams, SearchResult, build_hnsw, degree_ok, search_hnsw
from .ks2 import (Ks2Graph, Ks2QueryState, attach_ks2, edge_meta, ks2_test, query_lut, query_state,
                  routing_margin, routing_summary, search_ks2)
from .store import read_graph, write_graph

__all__ = [
    "HnswGraph", "HnswParams", "SearchResult", "build_hnsw", "degree_ok", "search_hnsw",
    "Ks2Graph", "Ks2QueryState", "attach_ks2", "edge_meta", "ks2_test", "query_lut", "query_state",
    "routing_margin", "routing_summary", "search_ks2", "read_graph", "write_graph",
]
