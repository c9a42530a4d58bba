"""Hybrid collaborative filtering toolkit.

Text-derived entity embeddings fine-tuned against a sparse binary
entity x item interaction matrix, with memory-based and pairwise-ranking
baselines, precision-recall evaluation, and similarity-graph community
detection. Ships as a library, a FastAPI service, and a CLI thin client.
"""

__version__ = "0.1.0"
