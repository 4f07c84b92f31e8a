"""Randomly stretched lattices: renewal environments, scale recursion, crossings, site-bond coupling."""
