"""degalign: feature-statistic alignment toolkit for blind super-resolution.

Subpackages:
    tensor        minimal reverse-mode autodiff engine
    degradations  stochastic second-order degradation pipeline
    alignment     linear / random-Fourier-feature alignment losses
    interactions  cooperative-game interaction analysis
    diagnostics   frequency-band, entropy, clustering and PSNR metrics
    model         toy residual super-resolution network
    training      desk-scale trainer and evaluation harness
    cli           command-line entry point
"""

__version__ = "0.1.0"
