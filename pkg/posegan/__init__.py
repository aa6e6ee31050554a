"""Adversarially pre-trained monocular visual odometry"""

__version__ = "1.0.0"
