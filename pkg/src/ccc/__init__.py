"""Census-constrained building classification from satellite features.

Census shares become per-class pixel-count constraints; an autoencoder is
trained jointly with size-constrained 1-D k-means on its latent channels to
map roof, wall, height and macro-taxonomy classes per pixel.
"""

__version__ = "0.1.0"
