"""Person segmentation with GrabCut over trixel meshes, plus appearance descriptors.

Modules: ``imaging`` (I/O and face alignment), ``tritom`` (trixel meshes),
``trimap`` (automatic trimaps), ``graphcut`` (GrabCut over pixels or
trixels), ``descriptors`` (LBP, HOG), ``classify`` (SVM and score fusion),
``evalbench`` (benchmark) and ``cli``.
"""

from .exceptions import TrixelsegError
from .graphcut import GrabCut
from .tritom import TriToM

__all__ = ["GrabCut", "TriToM", "TrixelsegError"]
__version__ = "0.1.0"
