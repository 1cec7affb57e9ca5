"""
wrcfusion
Radar-camera 3D detection with wavelet mixture-of-experts pyramids and
geometry-guided progressive fusion, at desk scale.
"""

__version__ = "1.0.0"
