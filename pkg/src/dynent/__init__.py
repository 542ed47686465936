"""Dynamical entanglement of bipartite channels via Choi matrices and SDPs."""
