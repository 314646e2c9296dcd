"""scene_align: align 3D CAD models to objects in depth images.

Pipeline stages: synthetic data generation, coarse pose classification,
gravity-constrained render+ICP alignment, fit selection, and render-based
evaluation metrics.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    CameraIntrinsics,
    DepthImage,
    GeocentricFrame,
    NormalImage,
    PointCloud,
)
from .mesh import TriangleMesh  # noqa: F401
from .render import ModelLibrary, Placement, RenderOutput  # noqa: F401
