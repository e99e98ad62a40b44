"""flowcodec: a desk-scale neural video codec.

Encoding overfits a small coordinate network (conditioning frames plus
confidence masks) and a set of seeded low-rank adapter coefficients to
one group of pictures, then prunes, quantizes, and range-codes them into
a self-contained bitstream. Decoding rebuilds the models and integrates
a learned velocity field from noise to recover the latent video.
"""

__version__ = "0.1.0"
