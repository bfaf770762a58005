"""Sparse-label aboveground-biomass regression pipeline.

Subpackages:
    numcore     tensor arithmetic with reverse-mode differentiation, Adam, PRNG
    geodata     rasters, compositing, point labels, tiling, synthetic worlds
    models      windowed-attention encoder, pretraining head, regression heads, U-Net
    training    losses, schedules, training loops
    evaluation  bin-wise RMSE reports and rendering
    cli         command-line entry point (`agbpipe`)
"""

__version__ = "0.1.0"
