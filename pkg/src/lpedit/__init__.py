"""Legacy photo editing with a learned noise prior.

Two stages: NEGAN learns to translate clean images into a real-noise
domain from unpaired data (frequency-split wavelet losses), and IEGAN
performs joint denoising, inpainting and scribble-guided colorization
on images degraded with that learned prior.
"""

__version__ = "0.1.0"
