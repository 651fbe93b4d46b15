"""Self-supervised separation of mixed X-ray images of paintings.

Decomposes the X-ray image of a painting with a concealed design into two
hypothetical constituent X-ray images, using a coupled convolutional
sparse-coding model solved by an unrolled learned shrinkage-thresholding
network trained only on the mixed X-ray and the visible-surface RGB image.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
