"""roomlay: parametric room-layout encoding via differentiable hyperplane rendering.

Submodules
----------
layout    grids, polygons, rasterization, IoU, contours, layout/grid file I/O
roomgen   rectilinear anchor generation and conditional uniform augmentation
diffnet   minimal reverse-mode autodiff core (numpy), Adam, gradient checking
pipeline  encoder -> shape code -> hyperplanes -> differentiable occupancy
panorama  analytic semantic-boundary panoramas for layouts
harness   training loops, evaluation reports, checkpoints
cli       the ``roomlay`` command-line entry point
"""

__version__ = "0.1.0"
