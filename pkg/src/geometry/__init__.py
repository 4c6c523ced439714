"""Point clouds, radius graphs, farthest point sampling and edge embeddings."""
