"""Region-merging image segmentation with a learned similarity model.

The toolkit refines an initial over-segmentation into geo-objects by
merging adjacent segments whose learned embeddings are close, using a
region adjacency graph with a nearest-neighbour-graph merge queue.
"""

__version__ = "0.1.0"
